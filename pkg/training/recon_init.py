"""
Stage 2: reconstruction initialization of the inversion network Phi

Theta is frozen, so its NinjaDescs are computed once per stage. The same
fitting loop trains the from-scratch attackers of the evaluation bench.
"""

import os

import numpy as np
import torch

from core.checkpoint import save_checkpoint
from core.errors import EmptyDatasetError
from evalbench.quality import quality_report, ssim
from losses.reconstruction import recon_loss
from models.inversion import build_from_config, build_inversion_net, to_image_array
from models.ninjanet import encode_descriptors
from utils import get_logger, progress
from .common import (STAGE_RECON, adam, better, check_finite, history_frame, resume_state,
                     snapshot, write_history)
from .datasets import ImageSet, feature_maps

logger = get_logger(__name__)

HISTORY_COLUMNS = ['epoch', 'l_recon', 'val_ssim']


def encode_image_set(theta, image_set):
    """Per-image descriptors seen by the adversary (raw base descriptors if theta is None)"""
    if theta is None:
        return list(image_set.descriptors)
    return [encode_descriptors(theta, d) for d in image_set.descriptors]


def reconstruct(phi, image_set, descriptors, indices=None, batch_size=8):
    """Eval-mode reconstructions (h x w x 3 arrays) of some images of a set"""
    indices = list(range(len(image_set))) if indices is None else list(indices)
    was_training = phi.training
    phi.eval()
    dtype = next(phi.parameters()).dtype
    out = []
    try:
        with torch.no_grad():
            for start in range(0, len(indices), batch_size):
                batch = image_set.batch(indices[start:start + batch_size], descriptors=descriptors, dtype=dtype)
                out.extend(to_image_array(phi(feature_maps(None, batch))))
    finally:
        phi.train(was_training)
    return out


def evaluate_reconstruction(phi, image_set, descriptors):
    """Mean MAE / SSIM / PSNR of Phi's reconstructions of a whole set"""
    return quality_report(reconstruct(phi, image_set, descriptors), image_set.images())


def recon_step(phi, optimizer, extractor, batch):
    """One Adam step of Phi on L_recon; returns the loss value"""
    phi.train()
    optimizer.zero_grad()
    loss = recon_loss(extractor, phi(feature_maps(None, batch)), batch.targets)
    check_finite('reconstruction', l_recon=loss.detach())
    loss.backward()
    optimizer.step()
    return float(loss.detach())


def fit_inversion(config, phi, extractor, train_set, val_set, train_desc, val_desc, lr, epochs,
                  select, rng, stage, out_dir=None, resume=None, label='recon'):
    """
    Train Phi on L_recon and keep the snapshot chosen by validation SSIM

    Parameters:
    -----------
    config : ExperimentConfig
    phi : UNet or UResNet
    extractor : TapExtractor
        Frozen perceptual features
    train_set, val_set : ImageSet
    train_desc, val_desc : list of np.ndarray
        Descriptors the adversary sees, per image
    lr : float
    epochs : int
    select : str
        'max_ssim' or 'min_ssim'
    rng : RngHandle
    stage : int
        Stream key; epoch e draws from rng.fork(stage, e)
    out_dir : str or None
        Where phi.ckpt / last.ckpt / history.csv go
    resume : str or None
        last.ckpt of an interrupted run
    label : str
        Log prefix

    Returns:
    --------
    tuple
        (selected Phi, history DataFrame)
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise EmptyDatasetError(f"{label}: needs non-empty train and val image sets")
    mode = 'max' if select == 'max_ssim' else 'min'
    optimizer = adam(phi, lr)
    dtype = next(phi.parameters()).dtype
    best_phi, best_ssim, rows, start_epoch = snapshot(phi), None, [], 1

    state = resume_state(resume)
    if state is not None:
        state.restore_module('phi', phi)
        state.restore_optimizer('phi_opt', optimizer)
        state.restore_module('best_phi', best_phi)
        best_ssim = state.metric
        rows = [tuple(r) for r in state.meta['extra']['history']]
        start_epoch = state.epoch + 1
        logger.info(f"[LOAD] resuming {label} after epoch {state.epoch}")

    for epoch in progress(range(start_epoch, epochs + 1), desc=label):
        stream = rng.fork(stage, epoch)
        losses = [recon_step(phi, optimizer, extractor,
                             train_set.batch(indices, descriptors=train_desc, dtype=dtype))
                  for indices in train_set.batches(stream.numpy, config.batch_images)]
        val_ssim = evaluate_reconstruction(phi, val_set, val_desc)['ssim']
        rows.append((epoch, float(np.mean(losses)), val_ssim))
        if better(val_ssim, best_ssim, mode):
            best_ssim = val_ssim
            best_phi = snapshot(phi)
        logger.info(f"[TRAIN] {label} epoch {epoch}: L_recon {rows[-1][1]:.4f}, val SSIM {val_ssim:.4f}")
        if out_dir:
            save_checkpoint({'phi': phi, 'phi_opt': optimizer, 'best_phi': best_phi}, config,
                            os.path.join(out_dir, 'last.ckpt'), epoch=epoch, metric=best_ssim,
                            extra={'history': rows})

    history = history_frame(rows, HISTORY_COLUMNS)
    if out_dir:
        save_checkpoint({'phi': best_phi}, config, os.path.join(out_dir, 'phi.ckpt'),
                        epoch=len(rows), metric=best_ssim if best_ssim is not None else float('nan'))
        write_history(history, os.path.join(out_dir, 'history.csv'))
        logger.info(f"[SAVE] {label} -> {out_dir}")
    return best_phi, history


def train_recon_init(config, images_train, images_val, theta, extractor, rng, out_dir=None, resume=None):
    """
    Initialize Phi against a frozen Theta

    Parameters:
    -----------
    config : ExperimentConfig
    images_train, images_val : ImageSet
    theta : NinjaNet
        Frozen encoder (never modified here)
    extractor : TapExtractor
    rng : RngHandle
    out_dir, resume : str or None

    Returns:
    --------
    tuple
        (Phi, history DataFrame)
    """
    phi = build_from_config(config)
    return fit_inversion(config, phi, extractor, images_train, images_val,
                         encode_image_set(theta, images_train), encode_image_set(theta, images_val),
                         lr=config.lr_recon, epochs=config.epochs_recon, select=config.recon_select,
                         rng=rng, stage=STAGE_RECON, out_dir=out_dir, resume=resume, label='recon init')


def overfit_single_image(sample, descriptors, extractor, arch='unet', steps=200, lr=1e-3,
                         base_width=16, depth=5, seed=0):
    """
    Fit a fresh inversion network to one image

    Returns:
    --------
    tuple
        (Phi, SSIM of its eval-mode reconstruction)
    """
    phi = build_inversion_net(arch, descriptors.shape[1], base_width=base_width, depth=depth, seed=seed)
    image_set = ImageSet([sample], [descriptors])
    optimizer = adam(phi, lr)
    batch = image_set.batch([0])
    for _ in range(steps):
        recon_step(phi, optimizer, extractor, batch)
    pred = reconstruct(phi, image_set, image_set.descriptors)[0]
    return phi, ssim(pred, sample.image)
