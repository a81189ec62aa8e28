"""
Descriptor-utility metrics: FPR@95 and the verification / matching /
retrieval mAP triad, computed on patch pairs from synthetic warps

These are desk-scale analogues of the patch benchmark tasks, not a
re-implementation of the benchmark protocol.
"""

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.metrics import average_precision_score

from core.errors import EmptyDatasetError


def fpr95(pos_dists, neg_dists):
    """
    False-positive rate at 95% recall

    The threshold t is the smallest positive distance such that at least 95%
    of positives satisfy d <= t; the result is the fraction of negatives
    with d < t.

    Parameters:
    -----------
    pos_dists : array-like
        Distances of matching pairs
    neg_dists : array-like
        Distances of non-matching pairs

    Returns:
    --------
    float
        Value in [0, 1]
    """
    pos = np.sort(np.asarray(pos_dists, dtype=np.float64).ravel())
    neg = np.asarray(neg_dists, dtype=np.float64).ravel()
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("fpr95 needs non-empty positive and negative distance lists")
    k = (95 * len(pos) + 99) // 100     # ceil(0.95 n) in integers
    threshold = pos[k - 1]
    return float(np.mean(neg < threshold))


def row_distances(a, b):
    return np.linalg.norm(np.asarray(a) - np.asarray(b), axis=1)


def negative_pairs(count, shifts=10):
    """Fixed non-matching index pairs (i, i + s mod n) for s = 1..shifts"""
    shifts = min(shifts, count - 1)
    idx = np.arange(count)
    first = np.concatenate([idx] * shifts)
    second = np.concatenate([(idx + s) % count for s in range(1, shifts + 1)])
    return first, second


def patch_fpr95(desc_a, desc_p):
    """FPR@95 of row-aligned anchor / positive descriptors"""
    if len(desc_a) < 2:
        raise EmptyDatasetError("need at least 2 patch pairs for FPR@95")
    first, second = negative_pairs(len(desc_a))
    return fpr95(row_distances(desc_a, desc_p), row_distances(desc_a[first], desc_p[second]))


def average_precision(labels, scores):
    """AP of a ranking by descending score; 0 when nothing is relevant"""
    labels = np.asarray(labels, dtype=bool)
    if not labels.any():
        return 0.0
    return float(average_precision_score(labels, np.asarray(scores, dtype=np.float64)))


def map_verification(desc_a, desc_b, labels):
    """
    Pair verification: AP of classifying pairs (a_i, b_i) as matching,
    ranked by negative distance

    Parameters:
    -----------
    desc_a, desc_b : np.ndarray
        N x C row-aligned descriptors
    labels : array-like
        1 for matching pairs, 0 otherwise
    """
    labels = np.asarray(labels)
    if labels.shape != (len(desc_a),) or len(desc_a) != len(desc_b):
        raise ValueError("verification needs one ground-truth label per descriptor pair")
    return average_precision(labels == 1, -row_distances(desc_a, desc_b))


def map_matching(desc_query, desc_target, gt_index):
    """
    Matching: every query is matched to its nearest target; a match is
    correct when it is mutual and hits the ground-truth index. Queries are
    ranked by 1 - d1/d2 (Lowe ratio).

    Parameters:
    -----------
    desc_query : np.ndarray
        Nq x C
    desc_target : np.ndarray
        Nt x C (Nt >= 2)
    gt_index : array-like
        Ground-truth target index per query
    """
    gt_index = np.asarray(gt_index)
    if gt_index.shape != (len(desc_query),):
        raise ValueError("matching needs a ground-truth target index per query")
    if len(desc_target) < 2:
        raise ValueError("matching needs at least 2 targets for the ratio test")
    dist = cdist(desc_query, desc_target)
    order = np.argsort(dist, axis=1, kind='stable')
    nearest = order[:, 0]
    rows = np.arange(len(desc_query))
    d1 = dist[rows, nearest]
    d2 = dist[rows, order[:, 1]]
    reverse = np.argmin(dist, axis=0)
    mutual = reverse[nearest] == rows
    correct = mutual & (nearest == gt_index)
    ratio = np.where(d2 > 0, d1 / np.maximum(d2, 1e-12), 1.0)
    return average_precision(correct, 1.0 - ratio)


def map_retrieval(query_desc, query_labels, db_desc, db_labels):
    """
    Retrieval: mean over queries of the AP of the database ranked by
    distance, relevant entries sharing the query label

    Queries without any relevant entry are an error (no ground truth).
    """
    query_labels = np.asarray(query_labels)
    db_labels = np.asarray(db_labels)
    dist = cdist(query_desc, db_desc)
    aps = []
    for i, label in enumerate(query_labels):
        relevant = db_labels == label
        if not relevant.any():
            raise ValueError(f"query {i} (label {label}) has no relevant database entry")
        aps.append(average_precision(relevant, -dist[i]))
    if not aps:
        raise ValueError("no retrieval queries")
    return float(np.mean(aps))


def descriptor_utility(encode, patch_set, max_queries=500):
    """
    FPR@95 and the mAP triad of an encoding of a patch dataset

    Parameters:
    -----------
    encode : callable
        (N, C) base descriptors -> (N, C) evaluated descriptors
        (identity for the raw base descriptor)
    patch_set : PatchDataset
        Evaluation patches with cached base descriptors
    max_queries : int
        Retrieval query cap

    Returns:
    --------
    dict
        fpr95, map_verif, map_match, map_retr, map_mean
    """
    if len(patch_set) < 2:
        raise EmptyDatasetError("descriptor utility needs at least 2 patch pairs")
    desc_a = encode(patch_set.base_anchors)
    desc_p = encode(patch_set.base_positives)

    first, second = negative_pairs(len(desc_a), shifts=1)
    verif_a = np.concatenate([desc_a, desc_a[first]])
    verif_b = np.concatenate([desc_p, desc_p[second]])
    verif_labels = np.concatenate([np.ones(len(desc_a)), np.zeros(len(first))])
    map_verif = map_verification(verif_a, verif_b, verif_labels)

    match_scores = []
    for group in np.unique(patch_set.groups):
        idx = np.nonzero(patch_set.groups == group)[0]
        if len(idx) >= 2:
            match_scores.append(map_matching(desc_a[idx], desc_p[idx], np.arange(len(idx))))
    map_match = float(np.mean(match_scores)) if match_scores else 0.0

    queries = np.arange(min(max_queries, len(desc_a)))
    map_retr = map_retrieval(desc_a[queries], patch_set.labels[queries], desc_p, patch_set.labels)

    return {
        'fpr95': patch_fpr95(desc_a, desc_p),
        'map_verif': map_verif,
        'map_match': map_match,
        'map_retr': map_retr,
        'map_mean': float(np.mean([map_verif, map_match, map_retr])),
    }
