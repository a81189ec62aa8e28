"""
Base-descriptor providers

A provider turns image content into frozen C-dimensional unit vectors.
NinjaNet wraps whatever provider an experiment names; providers are never
trained and hold no mutable state after construction.
"""

import numpy as np

from config import GRADHIST_PARAMS
from core.errors import DescriptorDimensionError
from core.types import Descriptor, ImageSample
from imaging.image_io import to_grayscale
from imaging.patches import extract_patches
from .gradhist import gradhist_vector


class BaseDescriptorProvider:
    """
    Interface of every base descriptor

    Subclasses implement `describe_image_array`; patch-based providers also
    implement `describe_patches` (needed for utility training).
    """
    name = 'base'
    dim = 0
    supports_patches = False

    def describe_patches(self, patches):
        raise NotImplementedError(f"provider {self.name!r} cannot describe raw patches")

    def describe_image_array(self, image, keypoints):
        raise NotImplementedError

    def check_dim(self, expected):
        if self.dim != expected:
            raise DescriptorDimensionError(
                f"provider {self.name!r} has dim {self.dim}, experiment expects {expected}")
        return self


class GradHistProvider(BaseDescriptorProvider):
    """Built-in hand-crafted provider: gradient histograms of 32x32 patches"""
    name = 'gradhist'
    supports_patches = True

    def __init__(self, patch_size=GRADHIST_PARAMS['patch_size'], cells=GRADHIST_PARAMS['cells'],
                 bins=GRADHIST_PARAMS['bins']):
        self.patch_size = patch_size
        self.cells = cells
        self.bins = bins
        self.dim = cells * cells * bins

    def describe_patches(self, patches):
        """
        Describe a stack of grayscale patches

        Parameters:
        -----------
        patches : np.ndarray
            N x s x s patches

        Returns:
        --------
        np.ndarray
            N x dim unit-norm float64 rows
        """
        patches = np.asarray(patches, dtype=np.float64)
        if len(patches) == 0:
            return np.zeros((0, self.dim))
        return np.stack([gradhist_vector(p, cells=self.cells, bins=self.bins) for p in patches])

    def describe_image_array(self, image, keypoints):
        pixels = image.image if isinstance(image, ImageSample) else image
        gray = to_grayscale(pixels)
        return self.describe_patches(extract_patches(gray, list(keypoints), self.patch_size))


def describe_image(provider, image, keypoints):
    """
    One base descriptor per keypoint, in keypoint order

    Parameters:
    -----------
    provider : BaseDescriptorProvider
    image : ImageSample or np.ndarray
        External providers need an ImageSample (for its id)
    keypoints : list of Keypoint

    Returns:
    --------
    list of Descriptor
    """
    values = provider.describe_image_array(image, keypoints)
    return [Descriptor(row) for row in values]


def build_provider(config):
    """Provider named by config.provider: 'gradhist' or an external manifest path"""
    if config.provider == 'gradhist':
        provider = GradHistProvider(patch_size=config.patch_size)
    else:
        from .external import load_external_descriptors
        provider = load_external_descriptors(config.provider)
    return provider.check_dim(config.descriptor_dim)
