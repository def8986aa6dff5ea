"""Depthmap hole filling and detection of missing scene parts."""

import logging
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from core.geometry.render import render_depth
from core.geometry.types import Camera, DepthMap, TriangleMesh

logger = logging.getLogger(__name__)


def augment_depthmap(depths: np.ndarray, sigma: Optional[np.ndarray] = None, window: int = 9,
                     min_valid: float = 0.25, spread_sigma: float = 3.0) -> np.ndarray:
    """
    Fill invalid pixels with the median of their valid window neighbors.

    A hole is filled only when at least `min_valid` of the window is valid
    and the valid depths spread no more than `spread_sigma` sigma; sigma is
    the median of the supplied per-pixel sigma map over the window, or 1% of
    the median depth without one.
    """
    depths = np.asarray(depths, dtype=float)
    valid = np.isfinite(depths) & (depths > 0)
    result = np.where(valid, depths, np.inf)
    holes = np.argwhere(~valid)
    if not len(holes) or not valid.any():
        return result

    half = window // 2
    padded = np.pad(np.where(valid, depths, np.nan), half, constant_values=np.nan)
    windows = sliding_window_view(padded, (window, window))[holes[:, 0], holes[:, 1]]
    windows = windows.reshape(len(holes), -1)
    counts = np.count_nonzero(~np.isnan(windows), axis=1)
    enough = counts >= min_valid * window * window
    if not enough.any():
        return result

    windows = windows[enough]
    holes = holes[enough]
    median = np.nanmedian(windows, axis=1)
    spread = np.nanmax(windows, axis=1) - np.nanmin(windows, axis=1)
    if sigma is None:
        local_sigma = 0.01 * median
    else:
        sigma_padded = np.pad(np.where(valid, sigma, np.nan), half, constant_values=np.nan)
        sigma_windows = sliding_window_view(sigma_padded, (window, window))[holes[:, 0], holes[:, 1]]
        local_sigma = np.nanmedian(sigma_windows.reshape(len(holes), -1), axis=1)
    fill = spread <= spread_sigma * local_sigma
    result[holes[fill, 0], holes[fill, 1]] = median[fill]
    return result


def detect_missing(depthmap: DepthMap, camera: Camera, shrunk: TriangleMesh, expanded: TriangleMesh,
                   sigma: Optional[np.ndarray] = None, window: int = 9, min_valid: float = 0.25,
                   spread_sigma: float = 3.0) -> np.ndarray:
    """Pixels with no measurement, no augmented value, and geometry in both meshes."""
    augmented = augment_depthmap(depthmap.depths, sigma, window, min_valid, spread_sigma)
    shrunk_depth = render_depth(camera, shrunk, depthmap.downscale).depth.depths
    expanded_depth = render_depth(camera, expanded, depthmap.downscale).depth.depths
    missing = ~depthmap.valid & ~np.isfinite(augmented) & np.isfinite(shrunk_depth) & np.isfinite(expanded_depth)
    logger.debug(f"Image {depthmap.camera_id}: {np.count_nonzero(missing)} missing pixels")
    return missing
