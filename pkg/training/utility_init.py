"""
Stage 1: utility initialization of NinjaNet

Adam minimization of L_util (triplet + SOS) on patch pairs. The returned
encoder is the snapshot (initial weights included) with the lowest
validation FPR@95.
"""

import os

import numpy as np

from core.checkpoint import save_checkpoint
from core.errors import EmptyDatasetError
from evalbench.descriptor_metrics import patch_fpr95
from losses.utility import encode_pairs, utility_from_descriptors
from models.ninjanet import build_ninjanet, encode_descriptors
from utils import get_logger, progress
from .common import (STAGE_UTILITY, adam, better, check_finite, history_frame, resume_state,
                     snapshot, write_history)

logger = get_logger(__name__)

HISTORY_COLUMNS = ['epoch', 'l_util', 'fpr95']


def utility_step(theta, optimizer, base_anchors, base_positives, margin, generator=None):
    """
    One Adam step of Theta on L_util

    Returns:
    --------
    float
        Loss before the step
    """
    theta.train()
    optimizer.zero_grad()
    ninja_a, ninja_p = encode_pairs(theta, base_anchors, base_positives, generator=generator)
    loss = utility_from_descriptors(ninja_a, ninja_p, margin)
    check_finite('utility', l_util=loss.detach())
    loss.backward()
    optimizer.step()
    return float(loss.detach())


def validation_fpr95(theta, patch_val):
    return patch_fpr95(encode_descriptors(theta, patch_val.base_anchors),
                       encode_descriptors(theta, patch_val.base_positives))


def train_utility_init(config, patch_train, patch_val, rng, theta=None, out_dir=None, resume=None):
    """
    Train Theta on L_util and keep the best-FPR@95 snapshot

    Parameters:
    -----------
    config : ExperimentConfig
    patch_train, patch_val : PatchDataset
        Splits with cached base descriptors, disjoint in labels
    rng : RngHandle
        Run stream; epoch e draws from rng.fork(STAGE_UTILITY, e)
    theta : NinjaNet or None
        Starting encoder (fresh near-identity one if None)
    out_dir : str or None
        Where theta.ckpt / last.ckpt / history.csv go
    resume : str or None
        last.ckpt of an interrupted run

    Returns:
    --------
    tuple
        (best NinjaNet, history DataFrame)
    """
    if len(patch_train) < 2 or len(patch_val) < 2:
        raise EmptyDatasetError("utility initialization needs >= 2 train and val patch pairs")
    patch_train.require_descriptors()
    patch_val.require_descriptors()

    theta = build_ninjanet(config) if theta is None else theta
    optimizer = adam(theta, config.lr_utility)
    dtype = next(theta.parameters()).dtype

    best_theta = snapshot(theta)
    best_fpr = validation_fpr95(theta, patch_val)
    rows, start_epoch = [], 1
    state = resume_state(resume)
    if state is not None:
        state.restore_module('theta', theta)
        state.restore_optimizer('theta_opt', optimizer)
        state.restore_module('best_theta', best_theta)
        best_fpr = state.metric
        rows = [tuple(r) for r in state.meta['extra']['history']]
        start_epoch = state.epoch + 1
        logger.info(f"[LOAD] resuming utility init after epoch {state.epoch}")
    logger.info(f"[TRAIN] utility init: initial val FPR@95 {best_fpr:.4f}")

    for epoch in progress(range(start_epoch, config.epochs_utility + 1), desc='utility'):
        stream = rng.fork(STAGE_UTILITY, epoch)
        losses = []
        for indices in patch_train.batches(stream.numpy, config.batch_patches):
            base_a, base_p = patch_train.descriptor_batch(indices, dtype=dtype)
            losses.append(utility_step(theta, optimizer, base_a, base_p, config.triplet_margin,
                                       generator=stream.torch))
        fpr = validation_fpr95(theta, patch_val)
        rows.append((epoch, float(np.mean(losses)), fpr))
        if better(fpr, best_fpr, 'min'):
            best_fpr = fpr
            best_theta = snapshot(theta)
        logger.info(f"[TRAIN] utility epoch {epoch}: L_util {rows[-1][1]:.4f}, val FPR@95 {fpr:.4f}")
        if out_dir:
            save_checkpoint({'theta': theta, 'theta_opt': optimizer, 'best_theta': best_theta}, config,
                            os.path.join(out_dir, 'last.ckpt'), epoch=epoch, metric=best_fpr,
                            extra={'history': rows})

    history = history_frame(rows, HISTORY_COLUMNS)
    if out_dir:
        save_checkpoint({'theta': best_theta}, config, os.path.join(out_dir, 'theta.ckpt'),
                        epoch=len(rows), metric=best_fpr)
        write_history(history, os.path.join(out_dir, 'history.csv'))
        logger.info(f"[SAVE] utility init -> {out_dir}")
    return best_theta, history
