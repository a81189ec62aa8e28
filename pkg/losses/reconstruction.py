"""
Reconstruction loss: MAE plus perceptual feature distance (both means)

Losses accept torch tensors laid out N x 3 x H x W (or 3 x H x W). The MAE
also accepts numpy h x w x 3 arrays, in which case it returns a float.
"""

import numpy as np
import torch

from core.errors import ShapeMismatchError


def _check_shapes(pred, target):
    if tuple(pred.shape) != tuple(target.shape):
        raise ShapeMismatchError(f"prediction {tuple(pred.shape)} and target {tuple(target.shape)} differ")


def mae_loss(pred, target):
    """Mean over pixels and channels of |pred - target|"""
    _check_shapes(pred, target)
    if isinstance(pred, torch.Tensor):
        return (pred - target).abs().mean()
    return float(np.mean(np.abs(np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64))))


def _as_batch(x):
    return x[None] if x.dim() == 3 else x


def perceptual_loss(extractor, pred, target):
    """
    sum_k mean((psi_k(pred) - psi_k(target))^2) over the extractor taps

    Parameters:
    -----------
    extractor : TapExtractor
        Frozen
    pred, target : torch.Tensor
        N x 3 x H x W images in [0, 1]

    Returns:
    --------
    torch.Tensor
        Scalar
    """
    _check_shapes(pred, target)
    pred, target = _as_batch(pred), _as_batch(target)
    with torch.no_grad():
        target_taps = extractor(target)
    total = pred.new_zeros(())
    for p, t in zip(extractor(pred), target_taps):
        total = total + ((p - t) ** 2).mean()
    return total


def recon_loss(extractor, pred, target):
    """L_recon = MAE + perceptual"""
    return mae_loss(pred, target) + perceptual_loss(extractor, pred, target)
