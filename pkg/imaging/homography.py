"""
Synthetic homography pairs: random similarity warps with exact ground truth
"""

import numpy as np
from scipy import ndimage

from config import SYNTH_PARAMS


def similarity_homography(rotation_deg, scale, tx, ty, center):
    """
    3x3 homography rotating/scaling about `center` (x, y) then translating

    Entries are written out directly so that identity and pure translations
    are exact.
    """
    theta = np.deg2rad(rotation_deg)
    a = scale * np.cos(theta)
    b = scale * np.sin(theta)
    cx, cy = center
    return np.array([
        [a, -b, tx + cx - (a * cx - b * cy)],
        [b, a, ty + cy - (b * cx + a * cy)],
        [0.0, 0.0, 1.0],
    ])


def project_points(H, points):
    """Map (N, 2) x/y points through a homography"""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    homog = np.hstack([points, np.ones((len(points), 1))]) @ H.T
    return homog[:, :2] / homog[:, 2:3]


def warp_image(image, H, cval=0.0):
    """
    Warp by inverse-mapping every output pixel and sampling bilinearly

    Output pixel (x, y) takes the source value at H^-1 (x, y); samples
    outside the source get `cval`.
    """
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    H_inv = np.linalg.inv(H)
    ys, xs = np.mgrid[0:h, 0:w]
    src = project_points(H_inv, np.stack([xs.ravel(), ys.ravel()], axis=1))
    coords = [src[:, 1], src[:, 0]]
    if image.ndim == 2:
        return ndimage.map_coordinates(image, coords, order=1, mode='constant', cval=cval).reshape(h, w)
    channels = [ndimage.map_coordinates(image[..., c], coords, order=1, mode='constant', cval=cval)
                for c in range(image.shape[2])]
    return np.stack(channels, axis=1).reshape(h, w, image.shape[2])


def synth_pair(image, rng, max_rotation_deg=SYNTH_PARAMS['max_rotation_deg'],
               max_scale=SYNTH_PARAMS['max_scale'],
               max_translation_px=SYNTH_PARAMS['max_translation_px']):
    """
    Random warped copy of an image with its exact homography

    Parameters:
    -----------
    image : np.ndarray
        h x w (x 3) image
    rng : np.random.Generator
        Random stream
    max_rotation_deg : float
        Rotation drawn uniformly from [-max, max]
    max_scale : float
        Scale drawn log-uniformly from [1/max_scale, max_scale] (>= 1)
    max_translation_px : float
        Translation components drawn uniformly from [-max, max]

    Returns:
    --------
    tuple
        (warped image, H) with H[2, 2] == 1 mapping original to warped pixels
    """
    if max_rotation_deg < 0 or max_translation_px < 0 or max_scale < 1:
        raise ValueError("warp bounds must satisfy rotation >= 0, translation >= 0, scale >= 1")
    h, w = image.shape[:2]
    center = ((w - 1) / 2.0, (h - 1) / 2.0)
    while True:
        rotation = rng.uniform(-max_rotation_deg, max_rotation_deg)
        scale = float(np.exp(rng.uniform(-np.log(max_scale), np.log(max_scale))))
        tx, ty = rng.uniform(-max_translation_px, max_translation_px, size=2)
        H = similarity_homography(rotation, scale, tx, ty, center)
        if abs(np.linalg.det(H)) >= SYNTH_PARAMS['min_abs_det']:
            break
    return warp_image(image, H), H
