"""
Dataset ingestion: folder of images -> cropped PNGs, Harris keypoints,
warped patch pairs and a fixed train / val / test split
"""

import concurrent.futures
import os

import numpy as np

from basedesc.external import write_float_table
from core.errors import IngestionError
from core.rng import seed_rng
from core.types import Keypoint, keypoints_to_array
from imaging.harris import detect_keypoints
from imaging.homography import project_points, synth_pair
from imaging.image_io import crop_to_multiple, load_image, save_image, to_grayscale, write_manifest
from imaging.patches import extract_patches
from imaging.synthetic import make_toy_image
from training.datasets import SPLITS, PatchDataset
from utils import get_logger, num_workers

logger = get_logger(__name__)

IMAGE_EXTENSIONS = ('.png', '.jpg', '.jpeg', '.bmp', '.ppm')
MIN_IMAGES = 10
MIN_KEYPOINTS = 2
CROP_MULTIPLE = 32
STREAM_INGEST = 21
STREAM_SYNTHETIC = 22


def list_images(folder):
    if not os.path.isdir(folder):
        raise IngestionError(f"dataset folder not found: {folder}")
    return sorted(os.path.join(folder, name) for name in os.listdir(folder)
                  if name.lower().endswith(IMAGE_EXTENSIONS))


def split_sizes(count, config):
    """(train, val, test) counts, e.g. 10 images -> 6 / 1 / 3"""
    n_train = int(round(config.split_train * count))
    n_val = int(round(config.split_val * count))
    return n_train, n_val, count - n_train - n_val


def prepare_image(path, config):
    """
    Load, center-crop both sides to a multiple of 32 and detect keypoints

    The stored image keeps its (cropped) aspect ratio; training crops it
    to image_size x image_size at load time. Returns None (with a
    warning) for images smaller than image_size or with fewer than 2
    keypoints.
    """
    image = crop_to_multiple(load_image(path), CROP_MULTIPLE)
    size = config.image_size
    if image.shape[0] < size or image.shape[1] < size:
        logger.warning(f"[WARN] {os.path.basename(path)}: {image.shape[1]}x{image.shape[0]} "
                       f"smaller than {size}x{size}, excluded")
        return None
    keypoints = detect_keypoints(image, config)
    if len(keypoints) < MIN_KEYPOINTS:
        logger.warning(f"[WARN] {os.path.basename(path)}: {len(keypoints)} keypoints, excluded")
        return None
    return image, keypoints


def patch_pairs(image, keypoints, rng, config):
    """
    Anchor / positive patches of one image under a random similarity warp

    Keypoints whose projection leaves the warped image are dropped.

    Returns:
    --------
    tuple
        (anchors, positives, indices of the keypoints kept)
    """
    warped, H = synth_pair(image, rng, max_rotation_deg=config.max_rotation_deg,
                           max_scale=config.max_scale, max_translation_px=config.max_translation_px)
    h, w = image.shape[:2]
    projected = np.round(project_points(H, keypoints_to_array(keypoints)[:, :2])).astype(int)
    keep = np.nonzero((projected[:, 0] >= 0) & (projected[:, 0] < w) &
                      (projected[:, 1] >= 0) & (projected[:, 1] < h))[0]
    moved = [Keypoint(projected[i, 0], projected[i, 1]) for i in keep]
    anchors = extract_patches(to_grayscale(image), [keypoints[i] for i in keep], config.patch_size)
    positives = extract_patches(to_grayscale(warped), moved, config.patch_size)
    return anchors.astype(np.float32), positives.astype(np.float32), keep


def ingest_dataset(folder, config, out_dir=None):
    """
    Build the desk-scale dataset from a folder of images

    Parameters:
    -----------
    folder : str
        Source images (8-bit PNG / JPEG)
    config : ExperimentConfig
        Detector, crop, warp and split settings
    out_dir : str or None
        Destination (config.data_dir if None)

    Returns:
    --------
    dict
        split -> (image manifest path, patch file path)

    Raises:
    -------
    IngestionError
        If fewer than 10 usable images remain
    """
    out_dir = out_dir or config.data_dir
    paths = list_images(folder)
    with concurrent.futures.ThreadPoolExecutor(max_workers=num_workers()) as pool:
        prepared = list(pool.map(lambda p: prepare_image(p, config), paths))
    usable = [(os.path.splitext(os.path.basename(p))[0], item) for p, item in zip(paths, prepared) if item]
    if len(usable) < MIN_IMAGES:
        raise IngestionError(f"{folder}: {len(usable)} usable images, need at least {MIN_IMAGES}")

    rng = seed_rng(config.seed).fork(STREAM_INGEST)
    order = rng.numpy.permutation(len(usable))
    n_train, n_val, _ = split_sizes(len(usable), config)
    assignment = {'train': order[:n_train], 'val': order[n_train:n_train + n_val],
                  'test': order[n_train + n_val:]}

    outputs = {}
    for split in SPLITS:
        rows, anchors, positives, labels, groups = [], [], [], [], []
        for index in sorted(assignment[split]):
            sample_id, (image, keypoints) = usable[index]
            image_path = save_image(image, os.path.join(out_dir, 'images', f"{sample_id}.png"))
            write_float_table(keypoints_to_array(keypoints), os.path.join(out_dir, 'keypoints', f"{sample_id}.kp"))
            rows.append((sample_id, os.path.relpath(image_path, out_dir)))
            a, p, keep = patch_pairs(image, keypoints, rng.fork(int(index)).numpy, config)
            anchors.append(a)
            positives.append(p)
            labels.append(index * config.keypoint_budget + keep)
            groups.append(np.full(len(keep), index))
        manifest = write_manifest(rows, os.path.join(out_dir, f"images_{split}.txt"))
        if not rows:
            logger.warning(f"[WARN] split {split!r} is empty")
            empty = np.zeros((0, config.patch_size, config.patch_size), dtype=np.float32)
            anchors, positives = [empty], [empty]
            labels, groups = [np.zeros(0, dtype=np.int64)], [np.zeros(0, dtype=np.int64)]
        patches = PatchDataset(anchors=np.concatenate(anchors), positives=np.concatenate(positives),
                               labels=np.concatenate(labels).astype(np.int64),
                               groups=np.concatenate(groups).astype(np.int64))
        patch_path = patches.save(os.path.join(out_dir, f"patches_{split}.npz"))
        outputs[split] = (manifest, patch_path)
        logger.info(f"[INGEST] {split}: {len(rows)} images, {len(patches)} patch pairs")
    return outputs


def write_synthetic_folder(count, folder, config):
    """Render `count` toy images into a folder (input for ingest_dataset)"""
    rng = seed_rng(config.seed).fork(STREAM_SYNTHETIC)
    for i in range(count):
        save_image(make_toy_image(rng.numpy, size=config.image_size), os.path.join(folder, f"toy_{i:05d}.png"))
    logger.info(f"[INGEST] rendered {count} synthetic images into {folder}")
    return folder
