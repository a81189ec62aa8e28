"""
Privacy / utility trade-off sweep over the privacy parameter lambda

Per lambda: joint training from shared initializations, a from-scratch
attack, and the descriptor-utility metrics on the test patches. Rows are
flushed to the CSV as soon as each lambda finishes.
"""

import copy
import os

import numpy as np
import pandas as pd

from core.types import l2_normalize
from imaging.harris import detect_keypoints
from models.ninjanet import encode_descriptors
from training.common import STAGE_SWEEP
from training.joint import train_joint
from training.recon_init import encode_image_set, reconstruct
from utils import format_lambda, get_logger, progress, write_json
from visualizations.contact_sheet import save_contact_sheet
from visualizations.tradeoff_plotter import plot_tradeoff, save_figure
from .attacks import attack_train
from .descriptor_metrics import descriptor_utility
from .mma import make_eval_pairs, mma

logger = get_logger(__name__)

SWEEP_COLUMNS = ['lambda', 'fpr95', 'map_verif', 'map_match', 'map_retr', 'delta_map',
                 'mae', 'ssim', 'psnr', 'privacy', 'mma']

SHEET_ROWS = 4


def sweep_mma(config, provider, pairs, theta=None):
    """
    Mean matching accuracy (averaged over the 1..10 px thresholds) of the
    raw descriptor (theta None) or of NinjaDescs; NaN without a
    patch-capable provider
    """
    if provider is None or not provider.supports_patches or not pairs:
        return float('nan')

    def describe(image, keypoints):
        base = provider.describe_image_array(image, keypoints)
        return base if theta is None else encode_descriptors(theta, base)

    try:
        return float(np.mean(mma(pairs, describe, lambda image: detect_keypoints(image, config))))
    except ValueError as e:
        logger.warning(f"[WARN] MMA unavailable: {e}")
        return float('nan')


def raw_baseline(config, data, extractor, rng, provider=None, pairs=()):
    """
    Utility and attack metrics of the raw base descriptor

    Returns:
    --------
    tuple
        (baseline dict, raw attacker Phi)
    """
    utility = descriptor_utility(l2_normalize, data.patches['test'])
    phi, attack = attack_train(config, None, data, extractor, rng)
    baseline = {**utility, **attack, 'privacy': 1.0 - attack['ssim'],
                'mma': sweep_mma(config, provider, list(pairs))}
    return baseline, phi


def tradeoff_sweep(config, lambda_list, data, theta_init, phi_init, extractor, rng, out_dir=None,
                   provider=None):
    """
    Run the lambda sweep

    Parameters:
    -----------
    config : ExperimentConfig
    lambda_list : sequence of float
    data : ExperimentData
    theta_init : NinjaNet
        Utility-initialized encoder (copied for every lambda)
    phi_init : UNet or UResNet
        Reconstruction-initialized adversary (copied for every lambda)
    extractor : TapExtractor
    rng : RngHandle
        lambda i draws from rng.fork(STAGE_SWEEP, i + 1); the raw baseline
        from rng.fork(STAGE_SWEEP, 0)
    out_dir : str or None
        tradeoff.csv, baseline.json, tradeoff.png, contact_sheet.png and
        per-lambda joint-training folders
    provider : BaseDescriptorProvider or None
        Needed for the MMA column (NaN without it)

    Returns:
    --------
    pandas.DataFrame
        One row per lambda (SWEEP_COLUMNS); attrs['raw_privacy'] holds the
        baseline privacy
    """
    if len(lambda_list) == 0:
        raise ValueError("lambda list is empty")
    test = data.images['test']
    pairs = make_eval_pairs(test.images(), rng.fork(STAGE_SWEEP, 0, 1).numpy, config)
    baseline, raw_phi = raw_baseline(config, data, extractor, rng.fork(STAGE_SWEEP, 0), provider, pairs)
    logger.info(f"[SWEEP] raw baseline: mean mAP {baseline['map_mean']:.4f}, SSIM {baseline['ssim']:.4f}")

    show = list(range(min(SHEET_ROWS, len(test))))
    sheet = [test.images(show), reconstruct(raw_phi, test, encode_image_set(None, test), show)]
    labels = ['original', 'raw']

    csv_path = os.path.join(out_dir, 'tradeoff.csv') if out_dir else None
    if out_dir:
        write_json(baseline, os.path.join(out_dir, 'baseline.json'))

    rows = []
    for i, lam in enumerate(progress(list(lambda_list), desc='sweep')):
        stream = rng.fork(STAGE_SWEEP, i + 1)
        lam_config = config.replace(lam=float(lam))
        joint_dir = os.path.join(out_dir, format_lambda(lam)) if out_dir else None
        theta, _, _ = train_joint(lam_config, data, copy.deepcopy(theta_init), copy.deepcopy(phi_init),
                                  extractor, stream, lam=float(lam), out_dir=joint_dir)
        attacker, attack = attack_train(lam_config, theta, data, extractor, stream.fork(1))
        utility = descriptor_utility(lambda d, t=theta: encode_descriptors(t, d), data.patches['test'])
        rows.append({
            'lambda': float(lam),
            'fpr95': utility['fpr95'],
            'map_verif': utility['map_verif'],
            'map_match': utility['map_match'],
            'map_retr': utility['map_retr'],
            'delta_map': utility['map_mean'] - baseline['map_mean'],
            'mma': sweep_mma(config, provider, pairs, theta),
            'mae': attack['mae'],
            'ssim': attack['ssim'],
            'psnr': attack['psnr'],
            'privacy': 1.0 - attack['ssim'],
        })
        sheet.append(reconstruct(attacker, test, encode_image_set(theta, test), show))
        labels.append(format_lambda(lam))
        logger.info(f"[SWEEP] lambda {lam:g}: privacy {rows[-1]['privacy']:.4f}, "
                    f"delta mAP {rows[-1]['delta_map']:+.4f}")
        if csv_path:
            pd.DataFrame(rows, columns=SWEEP_COLUMNS).to_csv(csv_path, index=False, float_format='%.10g')

    table = pd.DataFrame(rows, columns=SWEEP_COLUMNS)
    table.attrs['raw_privacy'] = baseline['privacy']
    if out_dir:
        save_contact_sheet(sheet, os.path.join(out_dir, 'contact_sheet.png'), labels=labels)
        save_figure(plot_tradeoff(table), os.path.join(out_dir, 'tradeoff.png'))
        logger.info(f"[SAVE] sweep -> {out_dir}")
    return table
