"""
Gradient-histogram base descriptor (SIFT-like, 4x4 cells x 8 orientations)
JIT-compiled histogram accumulation with Numba
"""

import numpy as np
from numba import jit

from config import GRADHIST_PARAMS
from core.types import Descriptor


# ============================================================================
# JIT-COMPILED CORE FUNCTIONS
# ============================================================================

@jit(nopython=True, cache=True)
def _gradient_histogram_jit(patch, cells, bins, window_sigma):
    """
    Soft-binned histogram of gradient magnitudes

    Gradients are central differences with replicated borders. Each
    gradient votes into the two nearest orientation bins (linear weights)
    of the up to four nearest cells (bilinear weights), scaled by a Gaussian
    window centered on the patch.

    Returns:
    --------
    np.ndarray
        cells * cells * bins raw histogram (row-major: cell row, cell column, bin)
    """
    n = patch.shape[0]
    cell = n / cells
    center = (n - 1) / 2.0
    two_pi = 2.0 * np.pi
    hist = np.zeros((cells, cells, bins))
    for y in range(n):
        for x in range(n):
            gx = patch[y, min(x + 1, n - 1)] - patch[y, max(x - 1, 0)]
            gy = patch[min(y + 1, n - 1), x] - patch[max(y - 1, 0), x]
            mag = np.sqrt(gx * gx + gy * gy)
            if mag == 0.0:
                continue
            weight = mag * np.exp(-((x - center) ** 2 + (y - center) ** 2) / (2.0 * window_sigma ** 2))

            angle = np.arctan2(gy, gx)
            if angle < 0.0:
                angle += two_pi
            o = angle / two_pi * bins
            o0 = int(np.floor(o))
            fo = o - o0
            o0 = o0 % bins
            o1 = (o0 + 1) % bins

            u = (x + 0.5) / cell - 0.5
            v = (y + 0.5) / cell - 0.5
            u0 = int(np.floor(u))
            v0 = int(np.floor(v))
            fu = u - u0
            fv = v - v0
            for dv in range(2):
                vi = v0 + dv
                if vi < 0 or vi >= cells:
                    continue
                wv = fv if dv == 1 else 1.0 - fv
                for du in range(2):
                    ui = u0 + du
                    if ui < 0 or ui >= cells:
                        continue
                    wu = fu if du == 1 else 1.0 - fu
                    w = weight * wv * wu
                    hist[vi, ui, o0] += w * (1.0 - fo)
                    hist[vi, ui, o1] += w * fo
    return hist.ravel()


# ============================================================================
# DESCRIPTOR
# ============================================================================

def normalize_sift_style(hist, clamp=GRADHIST_PARAMS['clamp']):
    """
    L2-normalize, clamp entries at `clamp`, renormalize

    A histogram without energy maps to the all-equal unit vector.
    """
    hist = np.asarray(hist, dtype=np.float64)
    norm = np.linalg.norm(hist)
    if norm <= 1e-12:
        return np.full(hist.shape, 1.0 / np.sqrt(hist.size))
    clamped = np.minimum(hist / norm, clamp)
    return clamped / np.linalg.norm(clamped)


def gradhist_vector(patch, cells=GRADHIST_PARAMS['cells'], bins=GRADHIST_PARAMS['bins'],
                    clamp=GRADHIST_PARAMS['clamp'], window_sigma=GRADHIST_PARAMS['window_sigma']):
    """Descriptor values of one square grayscale patch as a float64 vector"""
    patch = np.ascontiguousarray(patch, dtype=np.float64)
    if patch.ndim != 2 or patch.shape[0] != patch.shape[1]:
        raise ValueError(f"patch must be square grayscale, got shape {patch.shape}")
    hist = _gradient_histogram_jit(patch, cells, bins, float(window_sigma))
    return normalize_sift_style(hist, clamp=clamp)


def gradhist_descriptor(patch):
    """
    128-D gradient-histogram descriptor of a 32x32 grayscale patch

    Parameters:
    -----------
    patch : np.ndarray
        32 x 32 patch, values in [0, 1]

    Returns:
    --------
    Descriptor
        Unit-norm descriptor; constant patches give entries 1/sqrt(128)
    """
    size = GRADHIST_PARAMS['patch_size']
    if np.shape(patch) != (size, size):
        raise ValueError(f"patch must be {size}x{size}, got {np.shape(patch)}")
    return Descriptor(gradhist_vector(patch))
