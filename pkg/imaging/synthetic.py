"""
Procedural toy corpus: smooth backgrounds with overlapping colored shapes

Stands in for landmark photographs in the acceptance runs; the shapes give
Harris plenty of corners and the inversion network real structure to learn.
"""

import numpy as np
from scipy import ndimage


def make_toy_image(rng, size=64, num_shapes=None):
    """
    One h x w x 3 image in [0, 1]

    Parameters:
    -----------
    rng : np.random.Generator
        Random stream
    size : int
        Side length in px
    num_shapes : int or None
        Number of rectangles/ellipses (random 4-9 if None)

    Returns:
    --------
    np.ndarray
        size x size x 3 float64 image
    """
    ys, xs = np.mgrid[0:size, 0:size] / float(size)
    c0, c1 = rng.uniform(0.1, 0.9, size=(2, 3))
    direction = rng.uniform(0, 2 * np.pi)
    t = (np.cos(direction) * xs + np.sin(direction) * ys + 1.0) / 2.0
    image = c0[None, None, :] * (1 - t[..., None]) + c1[None, None, :] * t[..., None]

    if num_shapes is None:
        num_shapes = int(rng.integers(4, 10))
    for _ in range(num_shapes):
        color = rng.uniform(0.0, 1.0, size=3)
        cx, cy = rng.uniform(0.1, 0.9, size=2)
        rx, ry = rng.uniform(0.06, 0.25, size=2)
        if rng.random() < 0.5:
            mask = (np.abs(xs - cx) < rx) & (np.abs(ys - cy) < ry)
        else:
            mask = ((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 < 1.0
        image[mask] = color

    texture = ndimage.gaussian_filter(rng.normal(0.0, 0.04, size=(size, size)), 1.0)
    image = image + texture[..., None]
    return np.clip(image, 0.0, 1.0)


def make_toy_corpus(count, rng, size=64):
    """List of `count` toy images"""
    return [make_toy_image(rng, size=size) for _ in range(count)]
