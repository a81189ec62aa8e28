"""
Harris corner detector with greedy non-maximum suppression
JIT-compiled suppression loop with Numba
"""

import numpy as np
from numba import jit
from scipy import ndimage

from config import HARRIS_PARAMS
from core.types import Keypoint
from .image_io import to_grayscale

SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T.copy()


# ============================================================================
# JIT-COMPILED CORE FUNCTIONS
# ============================================================================

@jit(nopython=True, cache=True)
def _greedy_nms_jit(ys, xs, height, width, radius, max_count):
    """
    Accept candidates in the given order unless an accepted one lies within
    `radius` (Chebyshev distance)

    Returns:
    --------
    np.ndarray
        Indices into ys/xs of the accepted candidates
    """
    taken = np.zeros((height, width), dtype=np.bool_)
    accepted = np.empty(min(len(ys), max_count), dtype=np.int64)
    n = 0
    for i in range(len(ys)):
        if n >= max_count:
            break
        y = ys[i]
        x = xs[i]
        y0 = max(0, y - radius)
        y1 = min(height, y + radius + 1)
        x0 = max(0, x - radius)
        x1 = min(width, x + radius + 1)
        free = True
        for yy in range(y0, y1):
            for xx in range(x0, x1):
                if taken[yy, xx]:
                    free = False
                    break
            if not free:
                break
        if free:
            taken[y, x] = True
            accepted[n] = i
            n += 1
    return accepted[:n]


# ============================================================================
# RESPONSE
# ============================================================================

def gaussian_kernel(sigma):
    """Normalized 2D Gaussian window of radius ceil(3 sigma)"""
    radius = max(1, int(np.ceil(3.0 * sigma)))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-offsets ** 2 / (2.0 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def harris_response(gray, k=HARRIS_PARAMS['k'], sigma=HARRIS_PARAMS['sigma']):
    """
    Harris response R = det(M) - k * trace(M)^2

    M is the structure tensor of Sobel gradients, summed with a Gaussian
    window. Borders are edge-replicated.

    Parameters:
    -----------
    gray : np.ndarray
        h x w grayscale image
    k : float
        Harris sensitivity
    sigma : float
        Gaussian window standard deviation in px

    Returns:
    --------
    np.ndarray
        h x w response map
    """
    gray = np.asarray(gray, dtype=np.float64)
    ix = ndimage.correlate(gray, SOBEL_X, mode='nearest')
    iy = ndimage.correlate(gray, SOBEL_Y, mode='nearest')
    window = gaussian_kernel(sigma)
    sxx = ndimage.correlate(ix * ix, window, mode='nearest')
    syy = ndimage.correlate(iy * iy, window, mode='nearest')
    sxy = ndimage.correlate(ix * iy, window, mode='nearest')
    return (sxx * syy - sxy * sxy) - k * (sxx + syy) ** 2


def harris_corners(image, max_count=HARRIS_PARAMS['max_count'], k=HARRIS_PARAMS['k'],
                   nms_radius=HARRIS_PARAMS['nms_radius'], sigma=HARRIS_PARAMS['sigma'],
                   rel_threshold=HARRIS_PARAMS['rel_threshold']):
    """
    Detect up to `max_count` Harris corners

    Parameters:
    -----------
    image : np.ndarray
        Grayscale h x w (or RGB, converted with 601 luma weights)
    max_count : int
        Keypoint budget
    k : float
        Harris sensitivity
    nms_radius : int
        No two returned keypoints lie within this Chebyshev distance
    sigma : float
        Structure-tensor window
    rel_threshold : float
        Candidates must exceed rel_threshold * max(R) and 0

    Returns:
    --------
    list of Keypoint
        Sorted by descending response (ties in raster order)
    """
    if max_count < 1:
        raise ValueError(f"max_count must be >= 1, got {max_count}")
    gray = to_grayscale(image)
    if not np.all(np.isfinite(gray)):
        raise ValueError("image contains non-finite values")
    if gray.shape[0] < 3 or gray.shape[1] < 3:
        return []

    response = harris_response(gray, k=k, sigma=sigma)
    peak = response.max()
    if peak <= 0:
        return []
    local_max = ndimage.maximum_filter(response, size=2 * nms_radius + 1, mode='nearest') == response
    candidates = local_max & (response > rel_threshold * peak)
    ys, xs = np.nonzero(candidates)
    if len(ys) == 0:
        return []

    order = np.argsort(-response[ys, xs], kind='stable')
    ys = ys[order].astype(np.int64)
    xs = xs[order].astype(np.int64)
    keep = _greedy_nms_jit(ys, xs, gray.shape[0], gray.shape[1], int(nms_radius), int(max_count))
    return [Keypoint(int(xs[i]), int(ys[i]), float(response[ys[i], xs[i]])) for i in keep]


def detect_keypoints(image, config):
    """Harris corners with the detector settings of an ExperimentConfig"""
    return harris_corners(image, max_count=config.keypoint_budget, k=config.harris_k,
                          nms_radius=config.nms_radius, sigma=config.harris_sigma,
                          rel_threshold=config.harris_rel_threshold)
