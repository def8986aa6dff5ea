"""Sparsification curves and the area under them."""

import numpy as np

from .types import AuscResult


def sparsification_curve(confidence: np.ndarray, errors: np.ndarray) -> np.ndarray:
    """
    Error rate of the retained pixels after removing i lowest-confidence
    pixels, for i = 0 .. N-1. Pixels of equal confidence are removed in
    expectation over their orderings.
    """
    confidence = np.asarray(confidence, dtype=float).ravel()
    errors = np.asarray(errors, dtype=bool).ravel()
    n = len(confidence)
    if n == 0 or n != len(errors):
        raise ValueError("confidence and errors must be non-empty and aligned")

    order = np.argsort(confidence, kind='stable')
    sorted_conf = confidence[order]
    sorted_err = errors[order].astype(float)
    cum_err = np.concatenate([[0.0], np.cumsum(sorted_err)])

    # tie groups [start, end)
    boundaries = np.flatnonzero(np.diff(sorted_conf)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [n]])
    group = np.repeat(np.arange(len(starts)), ends - starts)
    start = starts[group]
    size = (ends - starts)[group]
    group_errors = (cum_err[ends] - cum_err[starts])[group]

    removed = np.arange(n)
    removed_errors = cum_err[start] + (removed - start) * group_errors / size
    return (cum_err[-1] - removed_errors) / (n - removed)


def sparsification_ausc(confidence: np.ndarray, errors: np.ndarray) -> AuscResult:
    """AUSC of the predictor, of the oracle ordering, and of a random ordering."""
    errors = np.asarray(errors, dtype=bool).ravel()
    ausc = float(sparsification_curve(confidence, errors).mean())
    optimal = float(sparsification_curve(1.0 - errors.astype(float), errors).mean())
    random = float(errors.mean())
    degenerate = random == 0.0 or random == 1.0
    return AuscResult(
        ausc=ausc,
        optimal=optimal,
        random=random,
        relative=None if degenerate else ausc / optimal,
    )
