"""
Randomized decision forest over Lab patches.

Split tests read one or two pixels of the patch (offsets relative to the
patch center) and compare their value, sum, difference or absolute
difference against a threshold; samples with a response below the
threshold go left.
"""

import logging
from typing import Callable, List

import numpy as np

from .types import (
    ABS_DIFFERENCE,
    DIFFERENCE,
    LEAF,
    SUM,
    VALUE,
    ConfidenceForest,
    ForestConfig,
    PatchSamples,
    Tree,
)

logger = logging.getLogger(__name__)

# values(sample_idx, dy, dx, channel) -> pixel values, offsets relative to the patch center
PixelReader = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def patch_reader(patches: np.ndarray, radius: int) -> PixelReader:
    def read(idx, dy, dx, channel):
        return patches[idx, radius + dy, radius + dx, channel]
    return read


def split_responses(read: PixelReader, idx, kind, offsets, channels) -> np.ndarray:
    """Responses of per-element tests (all arguments broadcast together)."""
    first = read(idx, offsets[..., 1], offsets[..., 0], channels[..., 0]).astype(float)
    second = read(idx, offsets[..., 3], offsets[..., 2], channels[..., 1]).astype(float)
    return np.select(
        [kind == VALUE, kind == SUM, kind == DIFFERENCE],
        [first, first + second, first - second],
        default=np.abs(first - second),
    )


def _entropy(pos: np.ndarray, total: np.ndarray) -> np.ndarray:
    with np.errstate(divide='ignore', invalid='ignore'):
        p = np.where(total > 0, pos / np.where(total > 0, total, 1), 0.0)
        h = -(np.where(p > 0, p * np.log2(np.where(p > 0, p, 1)), 0.0)
              + np.where(p < 1, (1 - p) * np.log2(np.where(p < 1, 1 - p, 1)), 0.0))
    return h


def _best_split(responses: np.ndarray, labels: np.ndarray, n_thresholds: int):
    """
    Best (test, threshold) by information gain.

    Thresholds sit halfway between consecutive sorted responses at evenly
    spaced quantile positions; positions inside runs of equal values are
    skipped.

    Returns:
        (gain, test index, threshold); gain is -inf without a valid split
    """
    n_tests, m = responses.shape
    order = np.argsort(responses, axis=1, kind='stable')
    sorted_values = np.take_along_axis(responses, order, axis=1)
    cum_pos = np.cumsum(labels[order], axis=1)
    positions = np.unique(np.floor(np.linspace(0, m - 1, n_thresholds + 2)[1:-1]).astype(np.int64))
    positions = positions[positions < m - 1]
    if not len(positions):
        return -np.inf, -1, 0.0

    low = sorted_values[:, positions]
    high = sorted_values[:, positions + 1]
    valid = low < high
    n_left = (positions + 1).astype(float)
    n_right = m - n_left
    pos_left = cum_pos[:, positions].astype(float)
    pos_total = float(cum_pos[0, -1])
    pos_right = pos_total - pos_left

    parent = _entropy(np.array(pos_total), np.array(float(m)))
    gain = parent - (n_left / m) * _entropy(pos_left, n_left) - (n_right / m) * _entropy(pos_right, n_right)
    gain = np.where(valid, gain, -np.inf)
    flat = int(np.argmax(gain))
    test, column = divmod(flat, len(positions))
    best = float(gain[test, column])
    threshold = 0.5 * (low[test, column] + high[test, column])
    return best, test, float(threshold)


def grow_tree(samples: PatchSamples, indices: np.ndarray, config: ForestConfig,
              rng: np.random.Generator) -> Tree:
    """Grow one tree depth-first on `indices` (a bootstrap multiset of samples)."""
    radius = config.radius
    read = patch_reader(samples.patches, radius)
    labels = samples.positive.astype(np.int64)

    kind: List[int] = []
    offsets: List[tuple] = []
    channels: List[tuple] = []
    thresholds: List[float] = []
    children: List[list] = []
    leaf: List[int] = []
    class_counts: List[tuple] = []

    def new_node() -> int:
        kind.append(LEAF)
        offsets.append((0, 0, 0, 0))
        channels.append((0, 0))
        thresholds.append(0.0)
        children.append([-1, -1])
        leaf.append(-1)
        return len(kind) - 1

    def make_leaf(node: int, members: np.ndarray) -> None:
        n_pos = int(labels[members].sum())
        leaf[node] = len(class_counts)
        class_counts.append((len(members) - n_pos, n_pos))

    stack = [(new_node(), indices, 0)]
    while stack:
        node, members, depth = stack.pop()
        n_pos = int(labels[members].sum())
        if depth >= config.max_depth or len(members) < config.min_leaf or n_pos in (0, len(members)):
            make_leaf(node, members)
            continue

        subset = members if len(members) <= config.node_samples \
            else rng.choice(members, config.node_samples, replace=False)
        test_kind = rng.integers(0, 4, config.node_tests)
        test_offsets = rng.integers(-radius, radius + 1, (config.node_tests, 4))
        test_channels = rng.integers(0, 3, (config.node_tests, 2))
        responses = split_responses(
            read, subset[None, :], test_kind[:, None], test_offsets[:, None, :], test_channels[:, None, :],
        )
        gain, test, threshold = _best_split(responses, labels[subset], config.thresholds)
        if not gain > 0:
            make_leaf(node, members)
            continue

        chosen = split_responses(read, members, test_kind[test], test_offsets[test], test_channels[test])
        go_left = chosen < threshold
        if go_left.all() or not go_left.any():
            make_leaf(node, members)
            continue

        kind[node] = int(test_kind[test])
        offsets[node] = tuple(int(v) for v in test_offsets[test])
        channels[node] = tuple(int(v) for v in test_channels[test])
        thresholds[node] = threshold
        left, right = new_node(), new_node()
        children[node] = [left, right]
        stack.append((right, members[~go_left], depth + 1))
        stack.append((left, members[go_left], depth + 1))

    return Tree(
        kind=np.asarray(kind, dtype=np.int8),
        offsets=np.asarray(offsets, dtype=np.int8).reshape(-1, 4),
        channels=np.asarray(channels, dtype=np.int8).reshape(-1, 2),
        threshold=np.asarray(thresholds, dtype=np.float64),
        children=np.asarray(children, dtype=np.int32).reshape(-1, 2),
        leaf=np.asarray(leaf, dtype=np.int32),
        class_counts=np.asarray(class_counts, dtype=np.int64).reshape(-1, 2),
    )


def train_forest(samples: PatchSamples, config: ForestConfig) -> ConfidenceForest:
    """
    Train a bagged forest; each tree gets its own bootstrap sample and a
    generator spawned from the configured seed.
    """
    if len(samples) < config.min_leaf:
        raise ValueError(f"need at least {config.min_leaf} samples, got {len(samples)}")
    n = len(samples)
    trees = []
    for t, child in enumerate(np.random.SeedSequence(config.seed).spawn(config.trees)):
        rng = np.random.default_rng(child)
        indices = rng.integers(0, n, n) if config.bootstrap else np.arange(n)
        tree = grow_tree(samples, np.sort(indices), config, rng)
        tree.oob = np.ones(n, dtype=bool)
        tree.oob[indices] = False
        trees.append(tree)
        logger.debug(f"Tree {t}: {tree.n_nodes} nodes, {tree.n_leaves} leaves, depth {tree.depth()}")
    logger.info(f"Trained {config.trees} trees on {n} samples")
    return ConfidenceForest(trees=trees, config=config)


def route(tree: Tree, read: PixelReader, n: int) -> np.ndarray:
    """Leaf index reached by each of n elements."""
    node = np.zeros(n, dtype=np.int64)
    active = np.flatnonzero(tree.kind[node] != LEAF)
    while len(active):
        current = node[active]
        response = split_responses(
            read, active, tree.kind[current], tree.offsets[current].astype(np.int64),
            tree.channels[current].astype(np.int64),
        )
        go_right = (response >= tree.threshold[current]).astype(np.int64)
        node[active] = tree.children[current, go_right]
        active = active[tree.kind[node[active]] != LEAF]
    return tree.leaf[node]


def restructure_leaves(forest: ConfidenceForest, samples: PatchSamples, bins: int,
                       gamma_max: float) -> ConfidenceForest:
    """Give every leaf `bins` angular bins filled with the routed training samples."""
    restructured = ConfidenceForest(trees=[], config=forest.config, bins=bins, gamma_max=gamma_max)
    angle_bins = restructured.bin_of(samples.angles)
    labels = samples.positive.astype(np.int64)
    read = patch_reader(samples.patches, forest.radius)
    for tree in forest.trees:
        leaves = route(tree, read, len(samples))
        counts = np.zeros((tree.n_leaves, bins, 2), dtype=np.int64)
        np.add.at(counts, (leaves, angle_bins, labels), 1)
        restructured.trees.append(Tree(
            kind=tree.kind, offsets=tree.offsets, channels=tree.channels, threshold=tree.threshold,
            children=tree.children, leaf=tree.leaf, class_counts=tree.class_counts,
            bin_counts=counts, oob=tree.oob,
        ))
    logger.info(f"Restructured leaves into {bins} bins up to {gamma_max} deg")
    return restructured


def forest_confidences(forest: ConfidenceForest, read: PixelReader, n: int) -> np.ndarray:
    """(n, bins) confidence averaged over trees."""
    total = np.zeros((n, forest.bins))
    for tree in forest.trees:
        total += tree.confidence()[route(tree, read, n)]
    return total / len(forest.trees)


def oob_accuracy(forest: ConfidenceForest, samples: PatchSamples) -> float:
    """Out-of-bag accuracy of the class-count vote (positive iff mean fraction >= 0.5)."""
    read = patch_reader(samples.patches, forest.radius)
    votes = np.zeros(len(samples))
    seen = np.zeros(len(samples))
    for tree in forest.trees:
        if tree.oob is None:
            raise ValueError("out-of-bag masks are only available on freshly trained forests")
        counts = tree.class_counts
        fraction = counts[:, 1] / np.maximum(counts.sum(axis=1), 1)
        votes[tree.oob] += fraction[route(tree, read, len(samples))][tree.oob]
        seen += tree.oob
    scored = seen > 0
    if not scored.any():
        return float('nan')
    predicted = votes[scored] / seen[scored] >= 0.5
    return float(np.mean(predicted == samples.positive[scored]))
