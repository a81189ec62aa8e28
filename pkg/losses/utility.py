"""
Utility loss: hardest-in-batch triplet margin loss plus the second-order
similarity regularizer, both on L2 distances between descriptor rows
"""

import numpy as np
import torch

from config import LOSS_PARAMS
from core.errors import ShapeMismatchError


def safe_sqrt(x):
    """sqrt with a zero (not NaN) gradient at 0"""
    positive = x > 0
    return torch.where(positive, torch.sqrt(torch.where(positive, x, torch.ones_like(x))), torch.zeros_like(x))


def pairwise_distances(x, y):
    """(B, B') matrix of L2 distances between the rows of x and y"""
    diff = x[:, None, :] - y[None, :, :]
    return safe_sqrt((diff * diff).sum(dim=-1))


def _check_pair(anchors, positives):
    if anchors.shape != positives.shape or anchors.dim() != 2:
        raise ShapeMismatchError(
            f"anchors {tuple(anchors.shape)} and positives {tuple(positives.shape)} must both be B x C")
    if anchors.shape[0] < 2:
        raise ValueError(f"need at least 2 pairs for in-batch negatives, got {anchors.shape[0]}")


def triplet_loss(anchors, positives, margin=LOSS_PARAMS['triplet_margin'], labels=None):
    """
    Triplet margin loss with hardest in-batch negatives

    For pair i the negative candidates are every non-matching positive p_j
    (distance to a_i) and every non-matching anchor a_j (distance to p_i);
    the closest one is the hardest negative.

    Parameters:
    -----------
    anchors, positives : torch.Tensor
        B x C descriptors, row i of both describing the same point
    margin : float
        Hinge margin
    labels : array-like or None
        Point identities; duplicates are rejected

    Returns:
    --------
    torch.Tensor
        mean_i max(0, margin + d(a_i, p_i) - d_neg(i))
    """
    _check_pair(anchors, positives)
    if labels is not None:
        labels = np.asarray(labels)
        if len(np.unique(labels)) != len(labels):
            raise ValueError("duplicate labels in batch: hardest-negative mining needs distinct points")
    dist = pairwise_distances(anchors, positives)
    positive_dist = torch.diagonal(dist)
    eye = torch.eye(dist.shape[0], dtype=torch.bool, device=dist.device)
    masked = dist.masked_fill(eye, float('inf'))
    hardest = torch.minimum(masked.min(dim=1).values, masked.min(dim=0).values)
    return torch.relu(margin + positive_dist - hardest).mean()


def sos_regularizer(anchors, positives):
    """
    Second-order similarity: mean_i sqrt(sum_{j != i} (d(a_i, a_j) - d(p_i, p_j))^2)
    """
    _check_pair(anchors, positives)
    diff = pairwise_distances(anchors, anchors) - pairwise_distances(positives, positives)
    return safe_sqrt((diff * diff).sum(dim=1)).mean()


def utility_from_descriptors(anchors, positives, margin=LOSS_PARAMS['triplet_margin']):
    """L_util on already-encoded descriptors: triplet + SOS"""
    return triplet_loss(anchors, positives, margin) + sos_regularizer(anchors, positives)


def encode_pairs(theta, base_anchors, base_positives, generator=None):
    """
    Run Theta once over [anchors; positives] so that a training step draws
    one dropout mask per step
    """
    batch = base_anchors.shape[0]
    out = theta(torch.cat([base_anchors, base_positives], dim=0), generator=generator)
    return out[:batch], out[batch:]


def utility_loss(theta, batch, provider, margin=LOSS_PARAMS['triplet_margin'], generator=None):
    """
    L_util of a patch batch through the base provider and Theta

    Parameters:
    -----------
    theta : NinjaNet
        Encoder (its current train/eval mode is respected)
    batch : PatchTripletBatch
    provider : BaseDescriptorProvider
        Must describe raw patches
    margin : float
    generator : torch.Generator or None
        Dropout stream

    Returns:
    --------
    torch.Tensor
        Scalar loss
    """
    provider.check_dim(theta.dim)
    dtype = next(theta.parameters()).dtype
    base_a = torch.as_tensor(provider.describe_patches(batch.anchors), dtype=dtype)
    base_p = torch.as_tensor(provider.describe_patches(batch.positives), dtype=dtype)
    if len(np.unique(batch.labels)) != len(batch.labels):
        raise ValueError("duplicate labels in batch")
    ninja_a, ninja_p = encode_pairs(theta, base_a, base_p, generator=generator)
    return utility_from_descriptors(ninja_a, ninja_p, margin)
