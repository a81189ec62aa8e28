"""
Tests for quality metrics, descriptor-utility metrics, MMA, attacks and
the trade-off sweep
"""

import os
import sys

import numpy as np
import pandas as pd
import pytest

from basedesc.provider import GradHistProvider
from config import ExperimentConfig
from core.errors import EmptyDatasetError, ShapeMismatchError
from core.rng import seed_rng
from core.types import ImageSample, Keypoint, l2_normalize
from evalbench.attacks import (NNDatabase, attack_train, build_nn_database, nn_attack, nn_mosaic, oracle_attack,
                               oracle_curve)
from evalbench.descriptor_metrics import (average_precision, descriptor_utility, fpr95, map_matching,
                                          map_retrieval, map_verification)
from evalbench.mma import make_eval_pairs, match_accuracy, mma, mutual_nn_matches
from evalbench.quality import gaussian_window, mae_metric, psnr, quality_report, ssim
from evalbench.sweep import SWEEP_COLUMNS, tradeoff_sweep
from imaging.harris import harris_corners
from imaging.synthetic import make_toy_image
from losses.perceptual import random_extractor
from models.inversion import build_from_config
from models.ninjanet import build_ninjanet
from training.datasets import ExperimentData, ImageSet, PatchDataset
from utils import state_hash


# ============================================================================
# IMAGE QUALITY
# ============================================================================

def loop_ssim(a, b, size=11, sigma=1.5, c1=0.01 ** 2, c2=0.03 ** 2):
    """Window-by-window SSIM of two grayscale images"""
    half = (size - 1) / 2.0
    w = np.array([[np.exp(-((i - half) ** 2 + (j - half) ** 2) / (2 * sigma ** 2)) for j in range(size)]
                  for i in range(size)])
    w /= w.sum()
    values = []
    for y in range(a.shape[0] - size + 1):
        for x in range(a.shape[1] - size + 1):
            pa, pb = a[y:y + size, x:x + size], b[y:y + size, x:x + size]
            mu_a, mu_b = np.sum(w * pa), np.sum(w * pb)
            var_a = np.sum(w * (pa - mu_a) ** 2)
            var_b = np.sum(w * (pb - mu_b) ** 2)
            cov = np.sum(w * (pa - mu_a) * (pb - mu_b))
            values.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                          / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)))
    return float(np.mean(values))


def test_ssim_identical_and_inverted():
    a = np.random.default_rng(0).uniform(0.25, 0.75, size=(32, 32, 3))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)
    assert ssim(a, 1.0 - a) < 0.2


def test_ssim_matches_loop_reference():
    rng = np.random.default_rng(1)
    for _ in range(10):
        a, b = rng.random((14, 15)), rng.random((14, 15))
        assert ssim(a, b) == pytest.approx(loop_ssim(a, b), abs=1e-6)


def test_ssim_rgb_uses_luma():
    rng = np.random.default_rng(2)
    a, b = rng.random((16, 16, 3)), rng.random((16, 16, 3))
    luma = np.array([0.299, 0.587, 0.114])
    assert ssim(a, b) == pytest.approx(loop_ssim(a @ luma, b @ luma), abs=1e-6)


def test_ssim_errors():
    with pytest.raises(ValueError):
        ssim(np.zeros((8, 8)), np.zeros((8, 8)))
    with pytest.raises(ShapeMismatchError):
        ssim(np.zeros((16, 16)), np.zeros((16, 17)))
    assert gaussian_window().sum() == pytest.approx(1.0)


def test_psnr():
    zeros = np.zeros((8, 8, 3))
    assert psnr(zeros, zeros) == float('inf')
    assert psnr(zeros, np.full((8, 8, 3), 0.5)) == pytest.approx(6.0206, abs=1e-4)
    rng = np.random.default_rng(3)
    a, b = rng.random((6, 7, 3)), rng.random((6, 7, 3))
    total = 0.0
    for value in (a - b).ravel():
        total += value * value
    assert psnr(a, b) == pytest.approx(10 * np.log10(1.0 / (total / a.size)), abs=1e-9)


def test_mae_metric_and_report():
    a = np.zeros((16, 16, 3))
    b = np.ones((16, 16, 3))
    assert mae_metric(a, b) == 1.0
    report = quality_report([a, a], [a, b])
    assert set(report) == {'mae', 'ssim', 'psnr'}
    assert report['mae'] == pytest.approx(0.5)
    assert report['psnr'] == pytest.approx(0.0)
    with pytest.raises(ValueError):
        quality_report([], [])


# ============================================================================
# DESCRIPTOR UTILITY
# ============================================================================

def sweep_fpr95(pos, neg):
    """Try every positive distance as threshold, keep the smallest reaching 95% recall"""
    for t in sorted(pos):
        if np.mean(np.asarray(pos) <= t) >= 0.95:
            return float(np.mean(np.asarray(neg) < t))
    raise AssertionError("unreachable")


def test_fpr95_separable_and_inverted():
    assert fpr95([0.1] * 20, [0.9] * 20) == 0.0
    assert fpr95([0.9] * 20, [0.1] * 20) == 1.0


def test_fpr95_matches_threshold_sweep():
    pos = [0.1, 0.2, 0.3, 0.4, 0.5] * 20
    neg = np.linspace(0.0, 1.0, 101)
    assert fpr95(pos, neg) == pytest.approx(sweep_fpr95(pos, neg), abs=1e-15)
    rng = np.random.default_rng(4)
    for n in (1, 7, 20, 333, 1000):
        pos, neg = rng.random(n), rng.random(n) + 0.3
        assert fpr95(pos, neg) == sweep_fpr95(pos, neg)


def test_fpr95_empty():
    with pytest.raises(ValueError):
        fpr95([], [0.5])


def test_average_precision_hand_enumerated():
    labels = [1, 0, 1, 0, 0, 1, 0, 0, 0, 0]
    scores = np.arange(10, 0, -1)
    assert average_precision(labels, scores) == pytest.approx((1 / 1 + 2 / 3 + 3 / 6) / 3, abs=1e-12)
    assert average_precision([0, 0], [1.0, 2.0]) == 0.0


def test_separable_descriptors_give_perfect_map():
    desc = np.eye(8)
    verif_a = np.concatenate([desc, desc])
    verif_b = np.concatenate([desc, np.roll(desc, 1, axis=0)])
    labels = np.concatenate([np.ones(8), np.zeros(8)])
    assert map_verification(verif_a, verif_b, labels) == 1.0
    assert map_matching(desc, desc, np.arange(8)) == 1.0
    assert map_retrieval(desc, np.arange(8), desc, np.arange(8)) == 1.0


def test_random_verification_ap_near_half():
    aps = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        a = l2_normalize(rng.normal(size=(200, 16)))
        b = l2_normalize(rng.normal(size=(200, 16)))
        aps.append(map_verification(a, b, np.arange(200) % 2))
    assert abs(np.mean(aps) - 0.5) <= 0.05


def test_map_errors():
    with pytest.raises(ValueError):
        map_retrieval(np.eye(3), [0, 1, 9], np.eye(3), [0, 1, 2])
    with pytest.raises(ValueError):
        map_matching(np.eye(2), np.eye(2)[:1], [0, 0])
    with pytest.raises(ValueError):
        map_verification(np.eye(3), np.eye(3), [1, 0])


def test_descriptor_utility_keys():
    rng = np.random.default_rng(5)
    base = l2_normalize(rng.random((12, 128)))
    patches = PatchDataset(anchors=np.zeros((12, 32, 32)), positives=np.zeros((12, 32, 32)),
                           labels=np.arange(12), groups=np.arange(12) // 4,
                           base_anchors=base, base_positives=base.copy())
    result = descriptor_utility(lambda d: d, patches)
    assert set(result) == {'fpr95', 'map_verif', 'map_match', 'map_retr', 'map_mean'}
    assert result['fpr95'] == 0.0
    assert result['map_retr'] == 1.0


# ============================================================================
# MMA
# ============================================================================

def one_hot(image, keypoints):
    return np.eye(len(keypoints))


def test_mma_identity_pair():
    kps = [Keypoint(3, 4), Keypoint(10, 2), Keypoint(7, 7)]
    image = np.zeros((16, 16, 3))
    acc = mma([(image, image, np.eye(3))], one_hot, lambda img: kps)
    assert np.array_equal(acc, np.ones(10))


def test_mma_translation_pair():
    image1, image2 = np.zeros((16, 16, 3)), np.ones((16, 16, 3))
    kp1 = [Keypoint(3, 4), Keypoint(10, 2)]
    kp2 = [Keypoint(6, 4), Keypoint(13, 2)]
    H = np.array([[1.0, 0.0, 5.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    acc = mma([(image1, image2, H)], one_hot, lambda img: kp1 if img is image1 else kp2)
    # reprojection error is |5 - 3| = 2 px for both matches
    assert np.array_equal(acc, [0.0] + [1.0] * 9)


def test_mutual_matches_and_accuracy_edges():
    assert mutual_nn_matches(np.zeros((0, 4)), np.eye(4)).shape == (0, 2)
    assert np.array_equal(match_accuracy([], [], np.zeros((0, 2), dtype=int), np.eye(3)), np.zeros(10))
    with pytest.raises(ValueError):
        mma([(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)), np.eye(3))], one_hot, lambda img: [])


def test_mma_non_decreasing_on_toy_pairs():
    config = ExperimentConfig()
    rng = np.random.default_rng(6)
    images = [make_toy_image(rng, size=64) for _ in range(3)]
    provider = GradHistProvider()
    acc = mma(make_eval_pairs(images, rng, config), provider.describe_image_array,
              lambda img: harris_corners(img, max_count=50))
    assert len(acc) == 10
    assert np.all(np.diff(acc) >= 0)
    assert 0.0 <= acc.min() and acc.max() <= 1.0


# ============================================================================
# NN AND ORACLE ATTACKS
# ============================================================================

def random_database(size, seed=7, dim=16):
    rng = np.random.default_rng(seed)
    return NNDatabase(base=l2_normalize(rng.normal(size=(size, dim))),
                      ninja=l2_normalize(rng.normal(size=(size, dim))),
                      patches=rng.random((size, 4, 4, 3)))


def test_nn_attack_exact_match():
    db = random_database(50)
    idx = np.array([3, 17, 42])
    result = nn_attack(db.ninja[idx], db, mode='ninja-db')
    assert np.array_equal(result.indices, idx)
    assert np.allclose(result.distances, 0.0)
    assert np.array_equal(result.patches, db.patches[idx])


def test_nn_attack_modes_differ_and_permutation_stable():
    db = random_database(60)
    queries = l2_normalize(np.random.default_rng(8).normal(size=(100, 16)))
    base_hits = nn_attack(queries, db, mode='base-db')
    ninja_hits = nn_attack(queries, db, mode='ninja-db')
    assert np.any(base_hits.indices != ninja_hits.indices)
    assert np.all(base_hits.distances >= 0)
    order = np.random.default_rng(9).permutation(60)
    shuffled = NNDatabase(base=db.base[order], ninja=db.ninja[order], patches=db.patches[order])
    again = nn_attack(queries, shuffled, mode='base-db')
    assert np.allclose(again.distances, base_hits.distances)
    assert np.array_equal(order[again.indices], base_hits.indices)


def test_nn_attack_errors():
    empty = NNDatabase(base=np.zeros((0, 4)), ninja=np.zeros((0, 4)), patches=np.zeros((0, 2, 2, 3)))
    with pytest.raises(EmptyDatasetError):
        nn_attack(np.ones((1, 4)), empty)
    with pytest.raises(ValueError):
        nn_attack(np.ones((1, 16)), random_database(5), mode='pixels')


def test_nn_mosaic_higher_score_on_top():
    patches = np.stack([np.full((4, 4, 3), 0.2), np.full((4, 4, 3), 0.9)])
    kps = [Keypoint(5, 5, 0.8), Keypoint(6, 5, 0.1)]
    canvas = nn_mosaic(patches, kps, 12, 12)
    assert np.allclose(canvas[5, 5], 0.2)
    assert np.allclose(canvas[5, 7], 0.9)
    assert np.allclose(canvas[0, 0], 0.0)


def brute_force_curve(query_ninja, true_base, db, ks, variant='paper'):
    search = db.base if variant == 'paper' else db.ninja
    compare = db.ninja if variant == 'ninja-db' else db.base
    truths = query_ninja if variant == 'ninja-db' else true_base
    out = []
    for k in ks:
        per_query = []
        for q, truth in zip(query_ninja, truths):
            ranked = np.argsort(np.linalg.norm(search - q, axis=1), kind='stable')[:k]
            per_query.append(min(np.linalg.norm(compare[j] - truth) for j in ranked))
        out.append(np.mean(per_query))
    return np.array(out)



def test_oracle_curve_matches_brute_force_and_is_monotone():
    db = random_database(40)
    rng = np.random.default_rng(10)
    true_base = l2_normalize(rng.normal(size=(12, 16)))
    query = l2_normalize(true_base + 0.3 * rng.normal(size=(12, 16)))
    curve = oracle_curve(query, true_base, db, k_grid=(1, 2, 5, 10, 20, 40, 100))
    assert list(curve['k']) == [1, 2, 5, 10, 20, 40]
    assert np.allclose(curve['mean_min_dist'], brute_force_curve(query, true_base, db, curve['k']), atol=1e-12)
    assert np.all(np.diff(curve['mean_min_dist']) <= 0)


def test_oracle_full_k_is_global_nearest():
    db = random_database(30)
    rng = np.random.default_rng(11)
    true_base = l2_normalize(rng.normal(size=(5, 16)))
    query = l2_normalize(rng.normal(size=(5, 16)))
    result = oracle_attack(query, true_base, db, k=30)
    global_nn = np.min(np.linalg.norm(true_base[:, None, :] - db.base[None], axis=-1), axis=1)
    assert np.allclose(result.min_dists, global_nn)
    with pytest.raises(ValueError):
        oracle_attack(query, true_base, db, k=31)
    with pytest.raises(ValueError):
        oracle_attack(query, true_base, db, k=1, variant='exhaustive')


@pytest.mark.parametrize('variant', ['alternative', 'ninja-db'])
def test_oracle_variants_non_increasing(variant):
    db = random_database(25)
    rng = np.random.default_rng(12)
    true_base = l2_normalize(rng.normal(size=(6, 16)))
    query = l2_normalize(rng.normal(size=(6, 16)))
    curve = oracle_curve(query, true_base, db, k_grid=(1, 5, 25), variant=variant)
    assert np.all(np.diff(curve['mean_min_dist']) <= 0)


@pytest.mark.parametrize('variant', ['paper', 'alternative', 'ninja-db'])
def test_oracle_variant_curves_match_brute_force(variant):
    db = random_database(30)
    rng = np.random.default_rng(13)
    true_base = l2_normalize(rng.normal(size=(8, 16)))
    query = l2_normalize(true_base + 0.3 * rng.normal(size=(8, 16)))
    curve = oracle_curve(query, true_base, db, k_grid=(1, 3, 10, 30), variant=variant)
    expected = brute_force_curve(query, true_base, db, curve['k'], variant=variant)
    assert np.allclose(curve['mean_min_dist'], expected, atol=1e-12)


def test_oracle_ninja_db_stays_in_ninja_space():
    db = random_database(20)
    rng = np.random.default_rng(14)
    query = l2_normalize(rng.normal(size=(4, 16)))
    nearest = np.min(np.linalg.norm(query[:, None, :] - db.ninja[None], axis=-1), axis=1)
    for k in (1, 7, 20):
        # true base descriptors far from everything must not change the result
        result = oracle_attack(query, 100.0 + query, db, k=k, variant='ninja-db')
        assert np.allclose(result.min_dists, nearest, atol=1e-12)


def test_oracle_default_variant_and_alias():
    db = random_database(15)
    rng = np.random.default_rng(15)
    true_base = l2_normalize(rng.normal(size=(5, 16)))
    query = l2_normalize(rng.normal(size=(5, 16)))
    default = oracle_curve(query, true_base, db, k_grid=(1, 4, 15))
    assert default.equals(oracle_curve(query, true_base, db, k_grid=(1, 4, 15), variant='paper'))
    assert default.equals(oracle_curve(query, true_base, db, k_grid=(1, 4, 15), variant='base-rank'))



# ============================================================================
# ATTACK TRAINING AND SWEEP
# ============================================================================

def tiny_config(**overrides):
    base = dict(image_size=32, base_width=4, batch_patches=8, batch_images=2, keypoint_budget=20,
                epochs_utility=1, epochs_recon=1, epochs_joint=1, epochs_attack=1, seed=2)
    base.update(overrides)
    return ExperimentConfig(**base)


def toy_images(count, seed, provider):
    rng = np.random.default_rng(seed)
    samples = []
    for i in range(count):
        cells = rng.choice(32 * 32, size=12, replace=False)
        keypoints = [Keypoint(int(c % 32), int(c // 32), float(rng.random())) for c in cells]
        samples.append(ImageSample(make_toy_image(rng, size=32), keypoints, f"{seed}_{i}", budget=20))
    return ImageSet.from_samples(samples, provider)


def toy_patches(count, seed, provider):
    rng = np.random.default_rng(seed)
    anchors = rng.random((count, 32, 32))
    positives = np.clip(anchors + 0.05 * rng.normal(size=anchors.shape), 0.0, 1.0)
    return PatchDataset(anchors=anchors, positives=positives, labels=np.arange(count),
                        groups=np.arange(count) // 4).describe(provider)


@pytest.fixture(scope='module')
def data():
    provider = GradHistProvider()
    return ExperimentData(
        patches={s: toy_patches(16, i, provider) for i, s in enumerate(('train', 'val', 'test'))},
        images={s: toy_images(n, 10 + i, provider) for i, (s, n) in enumerate((('train', 4), ('val', 2),
                                                                                ('test', 2)))},
    )


def test_build_nn_database_subsamples(data):
    db = build_nn_database(data.images['train'], None, 20, np.random.default_rng(0), 8)
    assert len(db) == 20
    assert np.array_equal(db.base, db.ninja)
    assert db.patches.shape == (20, 8, 8, 3)
    everything = build_nn_database(data.images['train'], None, 10 ** 6, np.random.default_rng(0), 8)
    assert len(everything) == 4 * 12


def test_attack_train_reports_quality_and_leaves_theta(data):
    config = tiny_config()
    theta = build_ninjanet(config)
    before = state_hash(theta)
    phi, metrics = attack_train(config, theta, data, random_extractor(), seed_rng(2))
    assert set(metrics) == {'mae', 'ssim', 'psnr'}
    assert state_hash(theta) == before
    assert -1.0 <= metrics['ssim'] <= 1.0


def test_tradeoff_sweep_rows(data, tmp_path, monkeypatch):
    monkeypatch.setattr('evalbench.sweep.save_figure', lambda fig, path: path)
    config = tiny_config()
    theta, phi = build_ninjanet(config), build_from_config(config)
    table = tradeoff_sweep(config, [0.0, 2.5], data, theta, phi, random_extractor(), seed_rng(2),
                           out_dir=str(tmp_path), provider=GradHistProvider())
    assert len(table) == 2
    assert list(table.columns) == SWEEP_COLUMNS
    assert np.allclose(table['privacy'], 1.0 - table['ssim'], atol=1e-12)
    on_disk = pd.read_csv(tmp_path / 'tradeoff.csv')
    assert list(on_disk.columns) == SWEEP_COLUMNS and len(on_disk) == 2
    with open(tmp_path / 'tradeoff.csv', encoding='utf-8') as f:
        assert f.readline().strip() == 'lambda,fpr95,map_verif,map_match,map_retr,delta_map,mae,ssim,psnr,privacy,mma'
    assert os.path.exists(tmp_path / 'baseline.json')
    with pytest.raises(ValueError):
        tradeoff_sweep(config, [], data, theta, phi, random_extractor(), seed_rng(2))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
