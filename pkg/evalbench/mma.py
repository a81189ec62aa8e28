"""
Mean matching accuracy on synthetic homography pairs
"""

import numpy as np
from scipy.spatial.distance import cdist

from config import EVAL_PARAMS
from core.types import keypoints_to_array
from imaging.homography import project_points, synth_pair


def mutual_nn_matches(desc1, desc2):
    """(M, 2) index pairs that are each other's nearest neighbour"""
    if len(desc1) == 0 or len(desc2) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    dist = cdist(desc1, desc2)
    forward = np.argmin(dist, axis=1)
    backward = np.argmin(dist, axis=0)
    rows = np.nonzero(backward[forward] == np.arange(len(desc1)))[0]
    return np.stack([rows, forward[rows]], axis=1)


def match_accuracy(kp1, kp2, matches, H, thresholds=EVAL_PARAMS['mma_thresholds']):
    """Fraction of matches whose reprojection error under H is <= each threshold"""
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if len(matches) == 0:
        return np.zeros(len(thresholds))
    p1 = keypoints_to_array(kp1)[matches[:, 0], :2]
    p2 = keypoints_to_array(kp2)[matches[:, 1], :2]
    errors = np.linalg.norm(project_points(H, p1) - p2, axis=1)
    return (errors[:, None] <= thresholds[None, :]).mean(axis=0)


def mma(pairs, describe, detect, thresholds=EVAL_PARAMS['mma_thresholds']):
    """
    Mean matching accuracy over image pairs

    Parameters:
    -----------
    pairs : list of tuple
        (image1, image2, H) with H mapping image1 pixels to image2
    describe : callable
        (image, keypoints) -> (N, C) descriptors
    detect : callable
        image -> list of Keypoint
    thresholds : sequence of float
        Pixel thresholds (default 1..10)

    Returns:
    --------
    np.ndarray
        Mean accuracy per threshold (non-decreasing)

    Raises:
    -------
    ValueError
        If no image of any pair yields keypoints
    """
    accuracies = []
    for image1, image2, H in pairs:
        kp1, kp2 = detect(image1), detect(image2)
        if not kp1 or not kp2:
            continue
        matches = mutual_nn_matches(describe(image1, kp1), describe(image2, kp2))
        accuracies.append(match_accuracy(kp1, kp2, matches, H, thresholds))
    if not accuracies:
        raise ValueError("no keypoints detected in any evaluation pair")
    return np.mean(accuracies, axis=0)


def make_eval_pairs(images, rng, config):
    """Warp each image once with a random similarity (config bounds)"""
    pairs = []
    for image in images:
        warped, H = synth_pair(image, rng, max_rotation_deg=config.max_rotation_deg,
                               max_scale=config.max_scale, max_translation_px=config.max_translation_px)
        pairs.append((image, warped, H))
    return pairs
