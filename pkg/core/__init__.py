"""
Domain types, errors, random streams and checkpoints shared by all packages
"""

from .errors import NinjaError
from .rng import RngHandle, seed_rng, seeded_torch
from .types import Descriptor, ImageSample, Keypoint, PatchTripletBatch, l2_normalize

__all__ = ['NinjaError', 'RngHandle', 'seed_rng', 'seeded_torch',
           'Descriptor', 'ImageSample', 'Keypoint', 'PatchTripletBatch', 'l2_normalize']
