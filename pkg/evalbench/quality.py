"""
Reconstruction-quality metrics on [0, 1] images: SSIM, PSNR, MAE
"""

import numpy as np
from scipy import signal

from config import EVAL_PARAMS
from core.errors import ShapeMismatchError
from imaging.image_io import to_grayscale
from losses.reconstruction import mae_loss


def gaussian_window(size=EVAL_PARAMS['ssim_window'], sigma=EVAL_PARAMS['ssim_sigma']):
    """Normalized size x size Gaussian window"""
    offsets = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-offsets ** 2 / (2.0 * sigma ** 2))
    window = np.outer(g, g)
    return window / window.sum()


def _check(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"images differ in shape: {a.shape} vs {b.shape}")
    return a, b


def ssim(a, b, window_size=EVAL_PARAMS['ssim_window'], sigma=EVAL_PARAMS['ssim_sigma'],
         k1=EVAL_PARAMS['ssim_k1'], k2=EVAL_PARAMS['ssim_k2']):
    """
    Structural similarity of two images

    Both images are converted to 601 luma; local statistics use a Gaussian
    window over valid positions only.

    Parameters:
    -----------
    a, b : np.ndarray
        h x w x 3 (or h x w) images in [0, 1]

    Returns:
    --------
    float
        Mean SSIM in [-1, 1]
    """
    a, b = _check(a, b)
    ga, gb = to_grayscale(a), to_grayscale(b)
    if ga.shape[0] < window_size or ga.shape[1] < window_size:
        raise ValueError(f"image {ga.shape} smaller than the {window_size}x{window_size} SSIM window")
    window = gaussian_window(window_size, sigma)
    c1 = k1 ** 2
    c2 = k2 ** 2

    def filt(x):
        return signal.correlate(x, window, mode='valid', method='direct')

    mu_a, mu_b = filt(ga), filt(gb)
    var_a = filt(ga * ga) - mu_a ** 2
    var_b = filt(gb * gb) - mu_b ** 2
    cov = filt(ga * gb) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def psnr(a, b):
    """10 log10(1 / MSE) in dB; +inf for identical images"""
    a, b = _check(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float('inf')
    return float(10.0 * np.log10(1.0 / mse))


def mae_metric(a, b):
    """Mean absolute error (same definition as the MAE loss)"""
    a, b = _check(a, b)
    return mae_loss(a, b)


def quality_report(preds, targets):
    """
    Mean MAE / SSIM / PSNR over image pairs

    PSNR averages finite values only (inf if every pair is identical).
    """
    if len(preds) == 0:
        raise ValueError("no images to score")
    maes = [mae_metric(p, t) for p, t in zip(preds, targets)]
    ssims = [ssim(p, t) for p, t in zip(preds, targets)]
    psnrs = np.array([psnr(p, t) for p, t in zip(preds, targets)])
    finite = psnrs[np.isfinite(psnrs)]
    return {
        'mae': float(np.mean(maes)),
        'ssim': float(np.mean(ssims)),
        'psnr': float(np.mean(finite)) if len(finite) else float('inf'),
    }
