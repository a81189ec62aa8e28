"""
Sparse feature maps: descriptors scattered at their keypoint pixels

Grids are H x W x C (row-major [y, x]) as numpy values and C x H x W as
torch tensors fed to the inversion networks. When two keypoints share a
pixel, the higher detector score wins; ties go to the lower list index.
"""

import dataclasses

import numpy as np
import torch

from core.errors import ShapeMismatchError


@dataclasses.dataclass(frozen=True)
class SparseFeatureMap:
    grid: np.ndarray        # H x W x C, zero where occupancy is False
    occupancy: np.ndarray   # H x W bool

    @property
    def shape(self):
        return self.grid.shape

    def to_tensor(self, dtype=torch.float32):
        """C x H x W tensor"""
        return torch.as_tensor(np.ascontiguousarray(self.grid.transpose(2, 0, 1)), dtype=dtype)


def scatter_plan(keypoints, height, width):
    """
    Which keypoint owns which pixel

    Returns:
    --------
    tuple of np.ndarray
        (winning keypoint indices, flat cell indices y * W + x), aligned
    """
    if len(keypoints) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    xs = np.array([kp.x for kp in keypoints])
    ys = np.array([kp.y for kp in keypoints])
    scores = np.array([kp.score for kp in keypoints])
    outside = (xs < 0) | (xs >= width) | (ys < 0) | (ys >= height)
    if np.any(outside):
        i = int(np.argmax(outside))
        raise ValueError(f"keypoint {i} at ({xs[i]}, {ys[i]}) outside {width}x{height} grid")
    cells = ys * width + xs
    # best score first, lower index first among equal scores
    order = np.lexsort((np.arange(len(keypoints)), -scores))
    _, first = np.unique(cells[order], return_index=True)
    winners = np.sort(order[first])
    return winners.astype(np.int64), cells[winners].astype(np.int64)


def compose_feature_map(descriptors, keypoints, height, width):
    """
    Scatter descriptors into an H x W x C grid

    Parameters:
    -----------
    descriptors : list of Descriptor or np.ndarray
        One descriptor per keypoint
    keypoints : list of Keypoint
    height, width : int
        Grid size

    Returns:
    --------
    SparseFeatureMap
    """
    if isinstance(descriptors, np.ndarray):
        values = np.asarray(descriptors, dtype=np.float64)
    else:
        values = np.asarray([getattr(d, 'values', d) for d in descriptors], dtype=np.float64)
    if len(values) != len(keypoints):
        raise ShapeMismatchError(f"{len(values)} descriptors for {len(keypoints)} keypoints")
    dim = values.shape[1] if values.ndim == 2 else 0
    winners, cells = scatter_plan(keypoints, height, width)
    grid = np.zeros((height * width, dim))
    occupancy = np.zeros(height * width, dtype=bool)
    if len(winners):
        grid[cells] = values[winners]
        occupancy[cells] = True
    return SparseFeatureMap(grid=grid.reshape(height, width, dim), occupancy=occupancy.reshape(height, width))


def scatter_tensor(descriptors, winners, cells, height, width):
    """
    Differentiable C x H x W scatter of an (N, C) descriptor tensor

    `winners` / `cells` come from scatter_plan; gradients flow back into the
    descriptors that own a cell.
    """
    dim = descriptors.shape[1]
    grid = descriptors.new_zeros(dim, height * width)
    if len(winners):
        winners = torch.as_tensor(winners, dtype=torch.long)
        cells = torch.as_tensor(cells, dtype=torch.long)
        grid = grid.index_copy(1, cells, descriptors.index_select(0, winners).t())
    return grid.reshape(dim, height, width)
