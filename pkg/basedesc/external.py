"""
Externally computed descriptor dumps (e.g. learned descriptors run elsewhere)

Manifest: one line per image, `image_id<TAB>descfile<TAB>keypointfile`
(keypointfile may be `-`). Descriptor and keypoint files share one binary
layout: u32 count, u32 dim, then count x dim float32, little-endian.
Keypoint files have dim 3 (x, y, score).
"""

import os
import struct

import numpy as np

from core.errors import DescriptorDimensionError, DescriptorLookupError, IngestionError
from core.types import Descriptor, ImageSample, NORM_TOLERANCE
from utils import get_logger
from .provider import BaseDescriptorProvider

logger = get_logger(__name__)


def read_float_table(path):
    """Read a (count, dim) float32 table in the dump layout"""
    with open(path, 'rb') as f:
        data = f.read()
    if len(data) < 8:
        raise IngestionError(f"{path}: truncated header")
    count, dim = struct.unpack('<II', data[:8])
    expected = 8 + 4 * count * dim
    if len(data) != expected:
        raise IngestionError(f"{path}: expected {expected} bytes for {count}x{dim}, got {len(data)}")
    return np.frombuffer(data[8:], dtype='<f4').reshape(count, dim).astype(np.float64)


def write_float_table(table, path):
    """Write a (count, dim) table in the dump layout"""
    table = np.ascontiguousarray(table, dtype='<f4')
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    with open(path, 'wb') as f:
        f.write(struct.pack('<II', *table.shape))
        f.write(table.tobytes())
    return path


class ExternalDescriptorProvider(BaseDescriptorProvider):
    """Lookup table (image_id, keypoint_index) -> descriptor"""
    name = 'external'

    def __init__(self, tables, keypoints, dim, source=''):
        self._tables = tables
        self._keypoints = keypoints
        self.dim = dim
        self.source = source

    @property
    def image_ids(self):
        return sorted(self._tables)

    def lookup(self, image_id, keypoint_index):
        table = self._tables.get(image_id)
        if table is None or not 0 <= keypoint_index < len(table):
            raise DescriptorLookupError(f"no descriptor for ({image_id!r}, {keypoint_index})")
        return Descriptor(table[keypoint_index])

    def keypoint_index(self, image_id, keypoint):
        """Index of a keypoint in the dump (matched by pixel position)"""
        stored = self._keypoints.get(image_id)
        if stored is None:
            raise DescriptorLookupError(f"dump for {image_id!r} has no keypoint file")
        hits = np.nonzero((np.round(stored[:, 0]) == keypoint.x) & (np.round(stored[:, 1]) == keypoint.y))[0]
        if len(hits) == 0:
            raise DescriptorLookupError(f"keypoint ({keypoint.x}, {keypoint.y}) not in dump of {image_id!r}")
        return int(hits[0])

    def describe_image_array(self, image, keypoints):
        if not isinstance(image, ImageSample):
            raise TypeError("external descriptors are keyed by image id; pass an ImageSample")
        keypoints = list(keypoints)
        if not keypoints:
            return np.zeros((0, self.dim))
        if image.id in self._keypoints:
            indices = [self.keypoint_index(image.id, kp) for kp in keypoints]
        else:
            indices = range(len(keypoints))
        return np.stack([self.lookup(image.id, i).values for i in indices])


def load_external_descriptors(manifest_path):
    """
    Build a provider from a dump manifest

    Vectors whose norm deviates from 1 by more than 1e-5 are renormalized.

    Raises:
    -------
    DescriptorDimensionError
        If files disagree on the descriptor dimension
    """
    base = os.path.dirname(os.path.abspath(manifest_path))
    tables, keypoints = {}, {}
    dim = None
    with open(manifest_path, 'r', encoding='utf-8') as f:
        rows = [line.rstrip('\n').split('\t') for line in f if line.strip()]
    for row in rows:
        if len(row) < 2:
            raise IngestionError(f"{manifest_path}: malformed row {row!r}")
        image_id, desc_file = row[0], row[1]
        kp_file = row[2] if len(row) > 2 else '-'
        table = read_float_table(os.path.join(base, desc_file))
        if dim is None:
            dim = table.shape[1]
        elif table.shape[1] != dim:
            raise DescriptorDimensionError(
                f"{desc_file}: dim {table.shape[1]} differs from {dim} of earlier files")
        norms = np.linalg.norm(table, axis=1)
        off = np.abs(norms - 1.0) > NORM_TOLERANCE
        if np.any(off):
            logger.warning(f"[WARN] {image_id}: renormalized {int(off.sum())} descriptors")
            table[off] = table[off] / np.maximum(norms[off, None], 1e-12)
        tables[image_id] = table
        if kp_file != '-':
            keypoints[image_id] = read_float_table(os.path.join(base, kp_file))
    if dim is None:
        raise IngestionError(f"{manifest_path}: empty descriptor manifest")
    logger.info(f"[LOAD] external descriptors: {len(tables)} images, dim {dim}")
    return ExternalDescriptorProvider(tables, keypoints, dim, source=manifest_path)
