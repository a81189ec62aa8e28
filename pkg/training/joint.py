"""
Stage 3: joint adversarial training of Theta and Phi

Each iteration consumes one patch batch and one image batch:

  1. Theta sub-step: L_Theta = L_util - lambda * L_recon, one Adam step on
     Theta. Phi runs in eval mode with frozen parameters.
  2. Phi sub-step: features recomputed with the updated Theta (eval mode,
     no gradient), one Adam step on L_Phi = L_recon.

Adam moments persist per network across iterations and are reset at
stage boundaries.
"""

import os

import numpy as np
import torch

from core.checkpoint import save_checkpoint
from core.errors import EmptyDatasetError
from losses.objectives import phi_objective, theta_objective
from losses.reconstruction import recon_loss
from losses.utility import encode_pairs, utility_from_descriptors
from utils import get_logger, progress
from .common import (STAGE_JOINT, adam, better, check_finite, history_frame, resume_state,
                     set_requires_grad, snapshot, write_history)
from .datasets import feature_maps
from .recon_init import encode_image_set, evaluate_reconstruction
from .utility_init import validation_fpr95

logger = get_logger(__name__)

HISTORY_COLUMNS = ['epoch', 'l_util', 'l_recon', 'fpr95', 'val_ssim']


class JointTrainer:
    """
    Alternating minimax optimizer of an encoder / adversary pair

    Parameters:
    -----------
    theta : NinjaNet
    phi : UNet or UResNet
    extractor : TapExtractor
    lam : float
        Privacy parameter lambda >= 0
    lr_theta, lr_phi : float
        Adam learning rates
    margin : float
        Triplet margin
    """

    def __init__(self, theta, phi, extractor, lam, lr_theta, lr_phi, margin=1.0):
        if lam < 0:
            raise ValueError(f"lambda must be >= 0, got {lam}")
        self.theta = theta
        self.phi = phi
        self.extractor = extractor
        self.lam = lam
        self.margin = margin
        self.opt_theta = adam(theta, lr_theta)
        self.opt_phi = adam(phi, lr_phi)

    def theta_step(self, base_anchors, base_positives, image_batch, generator=None):
        """Update Theta on L_util - lambda * L_recon; Phi is left bit-identical"""
        self.theta.train()
        self.phi.eval()
        set_requires_grad(self.phi, False)
        try:
            self.opt_theta.zero_grad()
            ninja_a, ninja_p = encode_pairs(self.theta, base_anchors, base_positives, generator=generator)
            util = utility_from_descriptors(ninja_a, ninja_p, self.margin)
            pred = self.phi(feature_maps(self.theta, image_batch, generator=generator))
            recon = recon_loss(self.extractor, pred, image_batch.targets)
            loss = theta_objective(util, recon, self.lam)
            values = check_finite('theta sub-step', l_util=util.detach(), l_recon=recon.detach(),
                                  l_theta=loss.detach())
            loss.backward()
            self.opt_theta.step()
        finally:
            set_requires_grad(self.phi, True)
        return values

    def phi_step(self, image_batch):
        """Update Phi on L_recon against the current Theta; Theta is left bit-identical"""
        self.theta.eval()
        self.phi.train()
        with torch.no_grad():
            fmaps = feature_maps(self.theta, image_batch)
        self.opt_phi.zero_grad()
        recon = recon_loss(self.extractor, self.phi(fmaps), image_batch.targets)
        loss = phi_objective(recon)
        values = check_finite('phi sub-step', l_recon=recon.detach())
        loss.backward()
        self.opt_phi.step()
        return values

    def step(self, base_anchors, base_positives, image_batch, generator=None):
        theta_values = self.theta_step(base_anchors, base_positives, image_batch, generator=generator)
        phi_values = self.phi_step(image_batch)
        return {
            'theta_l_util': theta_values['l_util'],
            'theta_l_recon': theta_values['l_recon'],
            'theta_loss': theta_values['l_theta'],
            'phi_l_recon': phi_values['l_recon'],
        }


def joint_train_step(trainer, patch_batch, image_batch, generator=None):
    """
    One iteration of the alternating game

    Parameters:
    -----------
    trainer : JointTrainer
        Holds Theta, Phi and their optimizers
    patch_batch : tuple of torch.Tensor
        (base anchors, base positives)
    image_batch : ImageBatch
    generator : torch.Generator or None
        Dropout stream of the Theta sub-step

    Returns:
    --------
    tuple
        (Theta', Phi', diagnostics dict with the losses of both sub-steps)
    """
    diagnostics = trainer.step(patch_batch[0], patch_batch[1], image_batch, generator=generator)
    return trainer.theta, trainer.phi, diagnostics


def train_joint(config, data, theta, phi, extractor, rng, lam=None, out_dir=None, resume=None):
    """
    Alternate Theta / Phi updates for config.epochs_joint epochs

    The returned pair is the epoch with the lowest validation FPR@95.

    Parameters:
    -----------
    config : ExperimentConfig
    data : ExperimentData
        Needs patches/images of the train and val splits
    theta : NinjaNet
        Utility-initialized encoder (trained in place)
    phi : UNet or UResNet
        Reconstruction-initialized adversary (trained in place)
    extractor : TapExtractor
    rng : RngHandle
        Epoch e draws from rng.fork(STAGE_JOINT, e)
    lam : float or None
        Privacy parameter (config.lam if None)
    out_dir, resume : str or None

    Returns:
    --------
    tuple
        (best Theta, Phi of that epoch, history DataFrame)
    """
    lam = config.lam if lam is None else lam
    patch_train = data.patches['train'].require_descriptors()
    patch_val = data.patches['val'].require_descriptors()
    images_train, images_val = data.images['train'], data.images['val']
    if len(patch_train) < 2 or len(images_train) == 0:
        raise EmptyDatasetError("joint training needs patch pairs and images")

    trainer = JointTrainer(theta, phi, extractor, lam, config.lr_theta, config.lr_phi,
                           margin=config.triplet_margin)
    dtype = next(theta.parameters()).dtype
    best_theta, best_phi, best_fpr, rows, start_epoch = None, None, None, [], 1

    state = resume_state(resume)
    if state is not None:
        state.restore_module('theta', theta)
        state.restore_module('phi', phi)
        state.restore_optimizer('theta_opt', trainer.opt_theta)
        state.restore_optimizer('phi_opt', trainer.opt_phi)
        best_theta = state.restore_module('best_theta', snapshot(theta))
        best_phi = state.restore_module('best_phi', snapshot(phi))
        best_fpr = state.metric
        rows = [tuple(r) for r in state.meta['extra']['history']]
        start_epoch = state.epoch + 1
        logger.info(f"[LOAD] resuming joint training after epoch {state.epoch}")

    logger.info(f"[TRAIN] joint training, lambda {lam:g}")
    for epoch in progress(range(start_epoch, config.epochs_joint + 1), desc='joint'):
        stream = rng.fork(STAGE_JOINT, epoch)
        patch_batches = patch_train.batches(stream.numpy, config.batch_patches)
        image_order = np.concatenate([
            stream.numpy.permutation(len(images_train))
            for _ in range(int(np.ceil(len(patch_batches) * config.batch_images / len(images_train))) + 1)
        ])
        utils_, recons = [], []
        for it, indices in enumerate(patch_batches):
            image_idx = image_order[it * config.batch_images:(it + 1) * config.batch_images]
            _, _, diag = joint_train_step(trainer, patch_train.descriptor_batch(indices, dtype=dtype),
                                          images_train.batch(image_idx, dtype=dtype), generator=stream.torch)
            utils_.append(diag['theta_l_util'])
            recons.append(diag['phi_l_recon'])

        fpr = validation_fpr95(theta, patch_val)
        val_ssim = evaluate_reconstruction(phi, images_val, encode_image_set(theta, images_val))['ssim']
        rows.append((epoch, float(np.mean(utils_)), float(np.mean(recons)), fpr, val_ssim))
        if better(fpr, best_fpr, 'min'):
            best_fpr = fpr
            best_theta, best_phi = snapshot(theta), snapshot(phi)
        logger.info(f"[TRAIN] joint epoch {epoch}: L_util {rows[-1][1]:.4f}, L_recon {rows[-1][2]:.4f}, "
                    f"val FPR@95 {fpr:.4f}, val SSIM {val_ssim:.4f}")
        if out_dir:
            save_checkpoint({'theta': theta, 'phi': phi, 'theta_opt': trainer.opt_theta,
                             'phi_opt': trainer.opt_phi, 'best_theta': best_theta, 'best_phi': best_phi},
                            config, os.path.join(out_dir, 'last.ckpt'), epoch=epoch, metric=best_fpr,
                            extra={'history': rows, 'lambda': lam})

    if best_theta is None:
        best_theta, best_phi = snapshot(theta), snapshot(phi)
    history = history_frame(rows, HISTORY_COLUMNS)
    if out_dir:
        metric = best_fpr if best_fpr is not None else float('nan')
        save_checkpoint({'theta': best_theta}, config, os.path.join(out_dir, 'theta.ckpt'),
                        epoch=len(rows), metric=metric, extra={'lambda': lam})
        save_checkpoint({'phi': best_phi}, config, os.path.join(out_dir, 'phi.ckpt'),
                        epoch=len(rows), metric=metric, extra={'lambda': lam})
        write_history(history, os.path.join(out_dir, 'history.csv'))
        logger.info(f"[SAVE] joint training -> {out_dir}")
    return best_theta, best_phi, history
