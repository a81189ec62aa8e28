"""
Domain value types

Grid convention: every image-like array is indexed row-major as [y, x, ...];
keypoint x is the column, y the row, both 0-based integers.
Image values are float in [0, 1]; 8-bit files are divided by 255 on ingest.
"""

import dataclasses

import numpy as np

from .errors import DescriptorDimensionError, ShapeMismatchError


NORM_TOLERANCE = 1e-5


def _frozen_array(values, dtype=np.float64):
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def l2_normalize(values, axis=-1):
    """
    L2-normalize along an axis; all-zero rows map to the all-equal unit vector

    Parameters:
    -----------
    values : np.ndarray
        Rows to normalize
    axis : int
        Axis holding the descriptor entries

    Returns:
    --------
    np.ndarray
        Unit-norm rows (float64)
    """
    values = np.asarray(values, dtype=np.float64)
    norms = np.linalg.norm(values, axis=axis, keepdims=True)
    dim = values.shape[axis]
    uniform = np.full_like(values, 1.0 / np.sqrt(dim))
    safe = np.where(norms > 1e-12, norms, 1.0)
    return np.where(norms > 1e-12, values / safe, uniform)


@dataclasses.dataclass(frozen=True)
class Descriptor:
    """A C-dimensional local descriptor attached to a keypoint or patch"""
    values: np.ndarray
    norm_flag: bool = True

    def __post_init__(self):
        values = _frozen_array(self.values)
        if values.ndim != 1:
            raise ShapeMismatchError(f"descriptor must be a vector, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("descriptor entries must be finite")
        if self.norm_flag and abs(np.linalg.norm(values) - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"descriptor flagged normalized has norm {np.linalg.norm(values):.8f}")
        object.__setattr__(self, 'values', values)

    @property
    def dim(self):
        return self.values.shape[0]

    def check_dim(self, expected):
        if self.dim != expected:
            raise DescriptorDimensionError(f"descriptor has dim {self.dim}, expected {expected}")
        return self


@dataclasses.dataclass(frozen=True)
class Keypoint:
    """Integer pixel location with its detector response"""
    x: int
    y: int
    score: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'x', int(self.x))
        object.__setattr__(self, 'y', int(self.y))
        object.__setattr__(self, 'score', float(self.score))
        if not np.isfinite(self.score):
            raise ValueError("keypoint score must be finite")

    def inside(self, height, width):
        return 0 <= self.x < width and 0 <= self.y < height


def keypoints_to_array(keypoints):
    """(N, 3) float array of x, y, score"""
    if len(keypoints) == 0:
        return np.zeros((0, 3))
    return np.array([[k.x, k.y, k.score] for k in keypoints], dtype=np.float64)


def keypoints_from_array(array):
    return [Keypoint(int(round(x)), int(round(y)), float(s)) for x, y, s in np.asarray(array)]


@dataclasses.dataclass(frozen=True)
class ImageSample:
    """RGB image in [0,1]^(h x w x 3) with its keypoints"""
    image: np.ndarray
    keypoints: tuple
    id: str
    budget: int = 1000

    def __post_init__(self):
        image = _frozen_array(self.image)
        if image.ndim != 3 or image.shape[2] != 3:
            raise ShapeMismatchError(f"image must be h x w x 3, got {image.shape}")
        if image.size and (image.min() < 0.0 or image.max() > 1.0):
            raise ValueError("image pixels must lie in [0, 1]")
        keypoints = tuple(self.keypoints)
        if len(keypoints) > self.budget:
            raise ValueError(f"{len(keypoints)} keypoints exceed the budget of {self.budget}")
        h, w = image.shape[:2]
        for kp in keypoints:
            if not kp.inside(h, w):
                raise ValueError(f"keypoint ({kp.x}, {kp.y}) outside {w}x{h} image")
        object.__setattr__(self, 'image', image)
        object.__setattr__(self, 'keypoints', keypoints)

    @property
    def height(self):
        return self.image.shape[0]

    @property
    def width(self):
        return self.image.shape[1]


@dataclasses.dataclass(frozen=True)
class PatchTripletBatch:
    """
    Matched anchor / positive patches; labels identify the 3D point
    (here: the source image and keypoint) and must be distinct in a batch
    """
    anchors: np.ndarray
    positives: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        anchors = _frozen_array(self.anchors, np.float32)
        positives = _frozen_array(self.positives, np.float32)
        labels = _frozen_array(self.labels, np.int64)
        if anchors.shape != positives.shape or anchors.ndim != 3:
            raise ShapeMismatchError(
                f"anchors {anchors.shape} and positives {positives.shape} must both be B x s x s")
        if labels.shape != (anchors.shape[0],):
            raise ShapeMismatchError(f"need one label per pair, got {labels.shape}")
        if len(np.unique(labels)) != len(labels):
            raise ValueError("labels must be distinct within a batch")
        object.__setattr__(self, 'anchors', anchors)
        object.__setattr__(self, 'positives', positives)
        object.__setattr__(self, 'labels', labels)

    def __len__(self):
        return self.labels.shape[0]
