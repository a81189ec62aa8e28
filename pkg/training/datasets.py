"""
Training data containers

PatchDataset holds anchor / positive patch pairs with their cached base
descriptors (the provider is frozen, so descriptors are computed once).
ImageSet holds ImageSamples with cached base descriptors and the scatter
plan of every image, and builds batches of sparse feature maps.

On-disk layout written by ingestion (see cli.ingest):
    images/<id>.png (multiple-of-32 crops), keypoints/<id>.kp, images_<split>.txt,
    patches_<split>.npz
"""

import dataclasses
import os

import numpy as np
import torch

from basedesc.external import read_float_table
from core.errors import EmptyDatasetError, IngestionError
from core.types import ImageSample, Keypoint, PatchTripletBatch, keypoints_from_array
from imaging.image_io import crop_offsets, load_image, read_manifest
from models.feature_map import scatter_plan, scatter_tensor
from models.inversion import to_image_tensor
from utils import get_logger

logger = get_logger(__name__)

SPLITS = ('train', 'val', 'test')


# ============================================================================
# PATCH PAIRS
# ============================================================================

@dataclasses.dataclass
class PatchDataset:
    anchors: np.ndarray         # N x s x s grayscale
    positives: np.ndarray       # N x s x s
    labels: np.ndarray          # N, distinct point identities
    groups: np.ndarray          # N, source image index
    base_anchors: np.ndarray = None     # N x C, filled by describe()
    base_positives: np.ndarray = None

    def __len__(self):
        return len(self.labels)

    def describe(self, provider):
        """Cache base descriptors of all patches (skipped for lookup-only providers)"""
        if not provider.supports_patches:
            logger.warning(f"[WARN] provider {provider.name!r} cannot describe patches; "
                           "utility stages are unavailable")
            return self
        self.base_anchors = provider.describe_patches(self.anchors)
        self.base_positives = provider.describe_patches(self.positives)
        return self

    def require_descriptors(self):
        if self.base_anchors is None:
            raise ValueError("patch dataset has no base descriptors; use a patch-capable provider")
        return self

    def batch(self, indices):
        return PatchTripletBatch(self.anchors[indices], self.positives[indices], self.labels[indices])

    def descriptor_batch(self, indices, dtype=torch.float32):
        """Cached base descriptors of a batch as tensors (anchors, positives)"""
        return (torch.as_tensor(self.base_anchors[indices], dtype=dtype),
                torch.as_tensor(self.base_positives[indices], dtype=dtype))

    def batches(self, rng, batch_size):
        """Shuffled index batches of exactly batch_size (remainder dropped)"""
        if len(self) < 2:
            raise EmptyDatasetError(f"patch dataset has {len(self)} pairs, need >= 2")
        batch_size = min(batch_size, len(self))
        order = rng.permutation(len(self))
        return [order[i:i + batch_size] for i in range(0, len(order) - batch_size + 1, batch_size)]

    def save(self, path):
        os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
        np.savez_compressed(path, anchors=self.anchors, positives=self.positives,
                            labels=self.labels, groups=self.groups)
        return path

    @classmethod
    def load(cls, path, provider=None):
        if not os.path.exists(path):
            raise IngestionError(f"patch file not found: {path}")
        with np.load(path) as data:
            dataset = cls(anchors=data['anchors'], positives=data['positives'],
                          labels=data['labels'], groups=data['groups'])
        if provider is not None:
            dataset.describe(provider)
        return dataset


# ============================================================================
# IMAGES
# ============================================================================

@dataclasses.dataclass
class ImageBatch:
    """Everything a feature-map forward pass needs for a group of images"""
    base: torch.Tensor      # (sum N_i) x C stacked base descriptors
    counts: list            # keypoints per image
    plans: list             # (winners, cells) per image
    targets: torch.Tensor   # B x 3 x H x W
    height: int
    width: int


class ImageSet:
    """ImageSamples with cached base descriptors and scatter plans"""

    def __init__(self, samples, descriptors):
        if len(samples) != len(descriptors):
            raise ValueError("one descriptor array per image required")
        self.samples = list(samples)
        self.descriptors = [np.asarray(d, dtype=np.float64) for d in descriptors]
        self.plans = [scatter_plan(s.keypoints, s.height, s.width) for s in self.samples]

    def __len__(self):
        return len(self.samples)

    @classmethod
    def from_samples(cls, samples, provider):
        return cls(samples, [provider.describe_image_array(s, s.keypoints) for s in samples])

    @property
    def ids(self):
        return [s.id for s in self.samples]

    def images(self, indices=None):
        indices = range(len(self)) if indices is None else indices
        return [self.samples[i].image for i in indices]

    def batch(self, indices, descriptors=None, dtype=torch.float32):
        """
        ImageBatch for the given indices

        `descriptors` replaces the cached base descriptors (e.g. frozen
        NinjaDescs precomputed once per stage).
        """
        if len(indices) == 0:
            raise EmptyDatasetError("empty image batch")
        source = self.descriptors if descriptors is None else descriptors
        first = self.samples[indices[0]]
        rows = [source[i] for i in indices]
        return ImageBatch(
            base=torch.as_tensor(np.concatenate(rows), dtype=dtype),
            counts=[len(r) for r in rows],
            plans=[self.plans[i] for i in indices],
            targets=to_image_tensor(self.images(indices), dtype=dtype),
            height=first.height,
            width=first.width,
        )

    def batches(self, rng, batch_size):
        """Shuffled index batches (last one may be smaller)"""
        if len(self) == 0:
            raise EmptyDatasetError("image set is empty")
        order = rng.permutation(len(self))
        return [order[i:i + batch_size] for i in range(0, len(order), batch_size)]


def feature_maps(encoder, batch, generator=None):
    """
    B x C x H x W sparse feature maps of an ImageBatch

    With an encoder the descriptors pass through it (autograd recorded as
    the caller's context allows); with None they are scattered as given.
    """
    desc = batch.base if encoder is None else encoder(batch.base, generator=generator)
    maps = []
    for chunk, (winners, cells) in zip(torch.split(desc, batch.counts), batch.plans):
        maps.append(scatter_tensor(chunk, winners, cells, batch.height, batch.width))
    return torch.stack(maps)


def crop_sample(image, keypoints, size):
    """
    Central size x size window of a stored image

    Returns the cropped image, the indices of the keypoints inside the
    window and those keypoints shifted into window coordinates.
    """
    top, left = crop_offsets(image.shape, size, size)
    kept = [i for i, kp in enumerate(keypoints)
            if top <= kp.y < top + size and left <= kp.x < left + size]
    shifted = [Keypoint(keypoints[i].x - left, keypoints[i].y - top, keypoints[i].score) for i in kept]
    return image[top:top + size, left:left + size], np.asarray(kept, dtype=np.int64), shifted


def load_image_split(data_dir, split, provider, budget, size=None):
    """
    Load one split of an ingested dataset as an ImageSet

    Base descriptors are computed on the stored image (so external dumps
    are looked up with their own coordinates) before the image is cropped
    to the size x size training resolution.
    """
    manifest = os.path.join(data_dir, f"images_{split}.txt")
    if not os.path.exists(manifest):
        raise IngestionError(f"manifest not found: {manifest} (run the ingest command first)")
    samples, descriptors = [], []
    for sample_id, path in read_manifest(manifest):
        kp_path = os.path.join(data_dir, 'keypoints', f"{sample_id}.kp")
        keypoints = keypoints_from_array(read_float_table(kp_path))[:budget]
        stored = ImageSample(load_image(path), keypoints, sample_id, budget=budget)
        desc = provider.describe_image_array(stored, keypoints)
        if size is None or stored.image.shape[:2] == (size, size):
            samples.append(stored)
            descriptors.append(desc)
            continue
        image, kept, shifted = crop_sample(stored.image, keypoints, size)
        samples.append(ImageSample(image, shifted, sample_id, budget=budget))
        descriptors.append(desc[kept])
    return ImageSet(samples, descriptors)


@dataclasses.dataclass
class ExperimentData:
    """Every split an experiment touches"""
    patches: dict   # split -> PatchDataset
    images: dict    # split -> ImageSet


def load_experiment_data(config, provider, splits=SPLITS):
    """
    Load patch and image splits from config.data_dir

    Raises:
    -------
    IngestionError
        If the dataset has not been ingested
    """
    data_dir = config.data_dir
    patches = {s: PatchDataset.load(os.path.join(data_dir, f"patches_{s}.npz"), provider) for s in splits}
    images = {s: load_image_split(data_dir, s, provider, config.keypoint_budget, config.image_size) for s in splits}
    logger.info("[LOAD] dataset " + ', '.join(
        f"{s}: {len(images[s])} images / {len(patches[s])} pairs" for s in splits))
    return ExperimentData(patches=patches, images=images)
