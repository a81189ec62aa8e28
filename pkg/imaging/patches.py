"""
Axis-aligned patch extraction around keypoints
"""

import numpy as np


def extract_patch(image, keypoint, size):
    """
    Crop a size x size window centered at a keypoint

    The window spans rows y - size//2 .. y - size//2 + size - 1 (columns
    alike); indices leaving the image are clamped, i.e. border pixels are
    replicated.

    Parameters:
    -----------
    image : np.ndarray
        h x w or h x w x channels
    keypoint : Keypoint
        Window center
    size : int
        Patch side in px

    Returns:
    --------
    np.ndarray
        size x size (x channels) patch
    """
    h, w = image.shape[:2]
    if not keypoint.inside(h, w):
        raise ValueError(f"keypoint ({keypoint.x}, {keypoint.y}) outside {w}x{h} image")
    rows = np.clip(np.arange(size) + keypoint.y - size // 2, 0, h - 1)
    cols = np.clip(np.arange(size) + keypoint.x - size // 2, 0, w - 1)
    return image[np.ix_(rows, cols)]


def extract_patches(image, keypoints, size):
    """Stack of patches, one per keypoint (N x size x size [x channels])"""
    if len(keypoints) == 0:
        return np.zeros((0, size, size) + image.shape[2:], dtype=image.dtype)
    return np.stack([extract_patch(image, kp, size) for kp in keypoints])
