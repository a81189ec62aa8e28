"""
Descriptor inversion attacks

- attack_train: a fresh inversion network trained from scratch against a
  frozen encoder (or the raw base descriptor), scored on the test split
- nn_attack: every query descriptor is replaced by the patch of its nearest
  database entry, searched among base or NinjaNet descriptors
- oracle_attack: an attacker who holds (base, NinjaDesc) pairs retrieves K
  candidates and keeps the one closest to the true base descriptor
"""

import dataclasses

import numpy as np
import pandas as pd
from scipy.spatial.distance import cdist

from config import EVAL_PARAMS
from core.errors import EmptyDatasetError
from imaging.patches import extract_patch
from models.inversion import build_from_config
from models.ninjanet import encode_descriptors
from training.common import STAGE_ATTACK
from training.recon_init import encode_image_set, evaluate_reconstruction, fit_inversion
from utils import get_logger, state_hash

logger = get_logger(__name__)

NN_MODES = ('base-db', 'ninja-db')
ORACLE_VARIANTS = ('paper', 'alternative', 'ninja-db')
ORACLE_ALIASES = {'base-rank': 'paper'}


# ============================================================================
# FROM-SCRATCH ATTACK
# ============================================================================

def attack_train(config, theta, data, extractor, rng, arch=None, out_dir=None, resume=None):
    """
    Train an attacker from scratch and score it on the test split

    Parameters:
    -----------
    config : ExperimentConfig
    theta : NinjaNet or None
        Frozen encoder under attack; None attacks the raw base descriptor
    data : ExperimentData
        train / val / test image sets
    extractor : TapExtractor
    rng : RngHandle
    arch : str or None
        'unet' or 'uresnet' (config.arch if None)
    out_dir, resume : str or None

    Returns:
    --------
    tuple
        (attacker Phi, {'mae', 'ssim', 'psnr'} means on the test split)
    """
    before = state_hash(theta) if theta is not None else None
    train, val, test = data.images['train'], data.images['val'], data.images['test']
    if len(test) == 0:
        raise EmptyDatasetError("attack needs a non-empty test split")
    phi = build_from_config(config, seed=rng.fork(STAGE_ATTACK).torch_seed(), arch=arch)
    phi, _ = fit_inversion(config, phi, extractor, train, val,
                           encode_image_set(theta, train), encode_image_set(theta, val),
                           lr=config.lr_attack, epochs=config.epochs_attack, select='max_ssim',
                           rng=rng, stage=STAGE_ATTACK, out_dir=out_dir, resume=resume, label='attack')
    metrics = evaluate_reconstruction(phi, test, encode_image_set(theta, test))
    if theta is not None and state_hash(theta) != before:
        raise RuntimeError("attack training modified the attacked encoder")
    target = 'raw' if theta is None else 'NinjaNet'
    logger.info(f"[ATTACK] {target}: MAE {metrics['mae']:.4f}, SSIM {metrics['ssim']:.4f}, "
                f"PSNR {metrics['psnr']:.2f} dB")
    return phi, metrics


# ============================================================================
# NEAREST-NEIGHBOUR ATTACK
# ============================================================================

@dataclasses.dataclass
class NNDatabase:
    """Paired base / NinjaNet descriptors with the RGB patch each came from"""
    base: np.ndarray        # M x C
    ninja: np.ndarray       # M x C
    patches: np.ndarray     # M x s x s x 3

    def __len__(self):
        return len(self.base)


@dataclasses.dataclass
class NNAttackResult:
    indices: np.ndarray     # Q, database entry retrieved per query
    distances: np.ndarray   # Q
    patches: np.ndarray     # Q x s x s x 3


def build_nn_database(image_set, theta, size, rng, patch_size):
    """
    Database from every keypoint of an image set, subsampled to `size`
    entries (all of them if fewer)
    """
    base, patches = [], []
    for sample, desc in zip(image_set.samples, image_set.descriptors):
        for kp, row in zip(sample.keypoints, desc):
            base.append(row)
            patches.append(extract_patch(sample.image, kp, patch_size))
    if not base:
        raise EmptyDatasetError("no keypoints to build an NN database from")
    keep = np.arange(len(base))
    if len(base) > size:
        keep = np.sort(rng.choice(len(base), size=size, replace=False))
    base = np.asarray(base)[keep]
    ninja = base.copy() if theta is None else encode_descriptors(theta, base)
    return NNDatabase(base=base, ninja=ninja, patches=np.asarray(patches)[keep])


def nn_attack(query_descs, database, mode='ninja-db'):
    """
    Retrieve the nearest database entry of each query

    Parameters:
    -----------
    query_descs : np.ndarray
        Q x C descriptors observed by the attacker
    database : NNDatabase
    mode : str
        'base-db' searches the base descriptors, 'ninja-db' the NinjaDescs

    Returns:
    --------
    NNAttackResult
    """
    if mode not in NN_MODES:
        raise ValueError(f"mode must be one of {NN_MODES}, got {mode!r}")
    if len(database) == 0:
        raise EmptyDatasetError("NN attack database is empty")
    space = database.base if mode == 'base-db' else database.ninja
    dist = cdist(np.atleast_2d(query_descs), space)
    indices = np.argmin(dist, axis=1)
    return NNAttackResult(indices=indices, distances=dist[np.arange(len(indices)), indices],
                          patches=database.patches[indices])


def nn_mosaic(patches, keypoints, height, width):
    """
    Paste retrieved patches centered on their keypoints; higher-score
    keypoints are pasted last (on top). Uncovered pixels stay 0.
    """
    canvas = np.zeros((height, width, 3))
    order = sorted(range(len(keypoints)), key=lambda i: (keypoints[i].score, -i))
    for i in order:
        patch = patches[i]
        size = patch.shape[0]
        top = keypoints[i].y - size // 2
        left = keypoints[i].x - size // 2
        y0, x0 = max(0, top), max(0, left)
        y1, x1 = min(height, top + size), min(width, left + size)
        if y1 > y0 and x1 > x0:
            canvas[y0:y1, x0:x1] = patch[y0 - top:y1 - top, x0 - left:x1 - left]
    return canvas


def nn_attack_image(sample, query_descs, database, mode='ninja-db'):
    """Mosaic reconstruction of one image plus the per-keypoint distances"""
    result = nn_attack(query_descs, database, mode)
    return nn_mosaic(result.patches, list(sample.keypoints), sample.height, sample.width), result.distances


# ============================================================================
# ORACLE ATTACK
# ============================================================================

@dataclasses.dataclass
class OracleResult:
    candidates: np.ndarray      # Q x K database indices, nearest first
    min_dists: np.ndarray       # Q, distance of the best candidate to the true base descriptor

    @property
    def mean(self):
        return float(np.mean(self.min_dists))


def _oracle_tables(query_ninja, true_base, database, variant):
    """Per-query candidate ranking and each candidate's distance to the truth"""
    variant = ORACLE_ALIASES.get(variant, variant)
    if variant not in ORACLE_VARIANTS:
        raise ValueError(f"variant must be one of {ORACLE_VARIANTS}, got {variant!r}")
    if len(database) == 0:
        raise EmptyDatasetError("oracle database is empty")
    query_ninja = np.atleast_2d(query_ninja)
    true_base = np.atleast_2d(true_base)
    if variant == 'ninja-db':
        # the observed NinjaDesc is the truth; nothing leaves ninja space
        to_truth = cdist(query_ninja, database.ninja)
        ranking = np.argsort(to_truth, axis=1, kind='stable')
        return ranking, np.take_along_axis(to_truth, ranking, axis=1)
    search_space = database.base if variant == 'paper' else database.ninja
    ranking = np.argsort(cdist(query_ninja, search_space), axis=1, kind='stable')
    to_truth = cdist(true_base, database.base)
    return ranking, np.take_along_axis(to_truth, ranking, axis=1)


def oracle_attack(query_ninja, true_base, database, k, variant='paper'):
    """
    K-candidate oracle attack

    Parameters:
    -----------
    query_ninja : np.ndarray
        Q x C NinjaDescs observed by the attacker
    true_base : np.ndarray
        Q x C base descriptors they were computed from
    database : NNDatabase
    k : int
        Candidates per query, 1 <= k <= len(database)
    variant : str
        'paper' (alias 'base-rank'): k nearest database base descriptors to
        the query, scored against the true base descriptor;
        'alternative': k nearest database NinjaDescs, then their paired base
        descriptors; 'ninja-db': k nearest database NinjaDescs, scored
        against the query NinjaDesc itself

    Returns:
    --------
    OracleResult
    """
    if not 1 <= k <= len(database):
        raise ValueError(f"K must lie in [1, {len(database)}], got {k}")
    ranking, to_truth = _oracle_tables(query_ninja, true_base, database, variant)
    return OracleResult(candidates=ranking[:, :k], min_dists=to_truth[:, :k].min(axis=1))


def oracle_curve(query_ninja, true_base, database, k_grid=EVAL_PARAMS['oracle_k_grid'], variant='paper'):

    """Mean best-candidate distance for every K of a grid (K > |database| skipped)"""
    ranking, to_truth = _oracle_tables(query_ninja, true_base, database, variant)
    best = np.minimum.accumulate(to_truth, axis=1)
    ks = [int(k) for k in k_grid if 1 <= k <= len(database)]
    return pd.DataFrame({'k': ks, 'mean_min_dist': [float(best[:, k - 1].mean()) for k in ks]})
