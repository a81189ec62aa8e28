"""
Experiment commands: ingest, init-utility, init-recon, train-joint, attack, sweep

Every command loads a config file, applies flag overrides, writes its
outputs under --out DIR (one folder per stage) and finishes with a
manifest.json. Library errors become an [ERROR] line and exit status 1;
configuration errors exit with status 2.
"""

import argparse
import os
import sys

import numpy as np

from basedesc.provider import build_provider
from config import ExperimentConfig, load_config
from core.checkpoint import load_checkpoint
from core.errors import ConfigKeyError, ConfigValueError, NinjaError
from core.rng import seed_rng
from core.types import ImageSample
from evalbench.attacks import (ORACLE_VARIANTS, attack_train, build_nn_database, nn_attack_image,
                               oracle_curve)
from evalbench.quality import ssim
from evalbench.sweep import tradeoff_sweep
from imaging.harris import detect_keypoints
from imaging.image_io import crop_to_multiple, load_image, save_image
from losses.perceptual import build_perceptual_extractor
from models.inversion import build_from_config
from models.ninjanet import build_ninjanet
from training.common import STAGE_ATTACK, write_history
from training.datasets import ImageSet, load_experiment_data
from training.joint import train_joint
from training.recon_init import encode_image_set, reconstruct, train_recon_init
from training.utility_init import train_utility_init
from utils import get_logger, write_json, write_run_manifest
from visualizations.contact_sheet import save_contact_sheet
from visualizations.tradeoff_plotter import plot_history, plot_oracle_curve, save_figure
from .ingest import IMAGE_EXTENSIONS, ingest_dataset, list_images, write_synthetic_folder

logger = get_logger(__name__)

DEFAULT_CONFIG = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'configs', 'desk.cfg')
SHEET_ROWS = 4
ORACLE_QUERIES = 500


# ============================================================================
# SHARED PLUMBING
# ============================================================================

def effective_config(args):
    """Config file (or built-in defaults) with --seed / --lambda / --arch / --data applied"""
    if args.config and not os.path.exists(args.config):
        raise ConfigValueError(f"config file not found: {args.config}")
    path = args.config or DEFAULT_CONFIG
    config = load_config(path) if os.path.exists(path) else ExperimentConfig()
    overrides = {}
    if args.seed is not None:
        overrides['seed'] = args.seed
    if getattr(args, 'lam', None) is not None:
        overrides['lam'] = args.lam
    if getattr(args, 'arch', None) is not None:
        overrides['arch'] = args.arch
    if getattr(args, 'data', None) is not None:
        overrides['data_dir'] = args.data
    return config.replace(**overrides) if overrides else config


def stage_dir(args, stage):
    return os.path.join(args.out, stage)


def finish(out_dir, command, config, history=None, title=None):
    """history.png next to history.csv, then the run manifest"""
    os.makedirs(out_dir, exist_ok=True)
    if history is not None:
        save_figure(plot_history(history, title or command), os.path.join(out_dir, 'history.png'))
    outputs = sorted(os.path.join(out_dir, name) for name in os.listdir(out_dir)
                     if os.path.isfile(os.path.join(out_dir, name)) and name != 'manifest.json')
    write_run_manifest(out_dir, command, config, outputs)
    logger.info(f"[OK] {command} -> {out_dir}")


def load_theta(config, path):
    """NinjaNet restored from the 'theta' net of a checkpoint"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"encoder checkpoint not found: {path}")
    theta = build_ninjanet(config)
    load_checkpoint(path).restore_module('theta', theta)
    logger.info(f"[LOAD] theta from {path}")
    return theta


def load_phi(config, path):
    """Inversion network (config.arch) restored from the 'phi' net of a checkpoint"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"inversion checkpoint not found: {path}")
    phi = build_from_config(config)
    load_checkpoint(path).restore_module('phi', phi)
    logger.info(f"[LOAD] phi from {path}")
    return phi


# ============================================================================
# COMMANDS
# ============================================================================

def cmd_ingest(args):
    config = effective_config(args)
    out_dir = args.dataset or config.data_dir
    folder = args.images
    if args.synthetic:
        folder = write_synthetic_folder(args.synthetic, os.path.join(out_dir, 'source'), config)
    if not folder:
        raise ConfigValueError("ingest needs --images DIR or --synthetic N")
    outputs = ingest_dataset(folder, config, out_dir)
    write_run_manifest(out_dir, 'ingest', config, [p for pair in outputs.values() for p in pair])
    logger.info(f"[OK] ingest -> {out_dir}")
    return 0


def cmd_init_utility(args):
    config = effective_config(args)
    out_dir = stage_dir(args, 'utility_init')
    data = load_experiment_data(config, build_provider(config), splits=('train', 'val'))
    _, history = train_utility_init(config, data.patches['train'], data.patches['val'], seed_rng(config.seed),
                                    out_dir=out_dir, resume=args.resume)
    finish(out_dir, 'init-utility', config, history, title="Utility initialization")
    return 0


def cmd_init_recon(args):
    config = effective_config(args)
    out_dir = stage_dir(args, 'recon_init')
    theta = load_theta(config, args.theta or os.path.join(stage_dir(args, 'utility_init'), 'theta.ckpt'))
    data = load_experiment_data(config, build_provider(config), splits=('train', 'val'))
    _, history = train_recon_init(config, data.images['train'], data.images['val'], theta,
                                  build_perceptual_extractor(config), seed_rng(config.seed),
                                  out_dir=out_dir, resume=args.resume)
    finish(out_dir, 'init-recon', config, history, title="Reconstruction initialization")
    return 0


def cmd_train_joint(args):
    config = effective_config(args)
    out_dir = stage_dir(args, 'joint')
    theta = load_theta(config, args.theta or os.path.join(stage_dir(args, 'utility_init'), 'theta.ckpt'))
    phi = load_phi(config, args.phi or os.path.join(stage_dir(args, 'recon_init'), 'phi.ckpt'))
    data = load_experiment_data(config, build_provider(config), splits=('train', 'val'))
    _, _, history = train_joint(config, data, theta, phi, build_perceptual_extractor(config),
                                seed_rng(config.seed), out_dir=out_dir, resume=args.resume)
    finish(out_dir, 'train-joint', config, history, title=f"Joint training, lambda = {config.lam:g}")
    return 0


def attack_user_images(config, provider, theta, phi, folder, out_dir):
    """Reconstruct arbitrary user images with a trained attacker (no training)"""
    if not provider.supports_patches:
        raise ConfigValueError(f"provider {provider.name!r} cannot describe new images")
    multiple = max(32, 2 ** config.unet_depth)
    samples = []
    for path in list_images(folder):
        image = crop_to_multiple(load_image(path), multiple)
        if image.shape[0] == 0 or image.shape[1] == 0:
            logger.warning(f"[WARN] {os.path.basename(path)}: smaller than {multiple} px, skipped")
            continue
        sample_id = os.path.splitext(os.path.basename(path))[0]
        samples.append(ImageSample(image, detect_keypoints(image, config), sample_id,
                                   budget=config.keypoint_budget))
    if not samples:
        logger.warning(f"[WARN] no usable images ({', '.join(IMAGE_EXTENSIONS)}) in {folder}")
        return []
    image_set = ImageSet.from_samples(samples, provider)
    descriptors = encode_image_set(theta, image_set)
    written = []
    for i, sample in enumerate(samples):
        # sizes differ between user images, so one image per batch
        image = reconstruct(phi, image_set, descriptors, [i])[0]
        written.append(save_image(image, os.path.join(out_dir, 'user', f"{sample.id}.png")))
    logger.info(f"[ATTACK] reconstructed {len(written)} user images into {os.path.join(out_dir, 'user')}")
    return written


def cmd_attack(args):
    config = effective_config(args)
    out_dir = stage_dir(args, 'attack')
    provider = build_provider(config)
    theta = None if args.raw else load_theta(
        config, args.theta or os.path.join(stage_dir(args, 'joint'), 'theta.ckpt'))
    rng = seed_rng(config.seed)
    extractor = build_perceptual_extractor(config)

    if args.images and args.phi:
        phi = load_phi(config, args.phi)
        attack_user_images(config, provider, theta, phi, args.images, out_dir)
        finish(out_dir, 'attack', config)
        return 0

    data = load_experiment_data(config, provider)
    phi, metrics = attack_train(config, theta, data, extractor, rng, out_dir=out_dir, resume=args.resume)

    # nearest-neighbour and oracle attacks against a database from the training split
    train, test = data.images['train'], data.images['test']
    database = build_nn_database(train, theta, config.nn_database_size,
                                 rng.fork(STAGE_ATTACK, 1).numpy, config.patch_size)
    test_ninja = encode_image_set(theta, test)
    show = list(range(min(SHEET_ROWS, len(test))))
    mosaics, nn_scores = [], []
    for i, sample in enumerate(test.samples):
        mosaic, _ = nn_attack_image(sample, test_ninja[i], database, mode='ninja-db')
        nn_scores.append(ssim(mosaic, sample.image))
        if i in show:
            mosaics.append(mosaic)
    metrics['nn_ssim'] = float(np.mean(nn_scores))

    true_base = np.concatenate(test.descriptors)[:ORACLE_QUERIES]
    query = np.concatenate(test_ninja)[:ORACLE_QUERIES]
    curves = {variant: oracle_curve(query, true_base, database, variant=variant) for variant in ORACLE_VARIANTS}
    for variant, curve in curves.items():
        write_history(curve, os.path.join(out_dir, f"oracle_{variant}.csv"))
        if len(curve):
            metrics[f"oracle_{variant}_k1"] = float(curve['mean_min_dist'].iloc[0])
    save_figure(plot_oracle_curve(curves), os.path.join(out_dir, 'oracle.png'))

    write_json(metrics, os.path.join(out_dir, 'metrics.json'))
    save_contact_sheet([test.images(show), reconstruct(phi, test, test_ninja, show), mosaics],
                       os.path.join(out_dir, 'contact_sheet.png'), labels=['original', 'attack', 'nn'])
    if args.images:
        attack_user_images(config, provider, theta, phi, args.images, out_dir)
    finish(out_dir, 'attack', config)
    return 0


def parse_lambda_list(text):
    try:
        values = [float(v) for v in text.split(',') if v.strip()]
    except ValueError as e:
        raise ConfigValueError(f"--lambda-list: {e}") from e
    if not values or min(values) < 0:
        raise ConfigValueError(f"--lambda-list needs non-negative values, got {text!r}")
    return values


def cmd_sweep(args):
    config = effective_config(args)
    out_dir = stage_dir(args, 'sweep')
    lambdas = parse_lambda_list(args.lambda_list)
    provider = build_provider(config)
    theta = load_theta(config, args.theta or os.path.join(stage_dir(args, 'utility_init'), 'theta.ckpt'))
    phi = load_phi(config, args.phi or os.path.join(stage_dir(args, 'recon_init'), 'phi.ckpt'))
    data = load_experiment_data(config, provider)
    tradeoff_sweep(config, lambdas, data, theta, phi, build_perceptual_extractor(config),
                   seed_rng(config.seed), out_dir=out_dir, provider=provider)
    finish(out_dir, 'sweep', config)
    return 0


COMMANDS = {
    'ingest': cmd_ingest,
    'init-utility': cmd_init_utility,
    'init-recon': cmd_init_recon,
    'train-joint': cmd_train_joint,
    'attack': cmd_attack,
    'sweep': cmd_sweep,
}


# ============================================================================
# ENTRY POINT
# ============================================================================

def build_parser():
    parser = argparse.ArgumentParser(prog='python -m cli', description="NinjaDesc desk laboratory")
    sub = parser.add_subparsers(dest='command', required=True)

    def common(p):
        p.add_argument('--config', default=None, help="key = value config file (default configs/desk.cfg)")
        p.add_argument('--seed', type=int, default=None)
        p.add_argument('--data', default=None, help="ingested dataset directory (overrides data_dir)")
        p.add_argument('--out', default='runs', help="run directory (one folder per stage)")
        return p

    ingest = common(sub.add_parser('ingest', help="build the dataset from a folder of images"))
    ingest.add_argument('--images', default=None, help="folder of source images")
    ingest.add_argument('--synthetic', type=int, default=0, help="render N toy images instead")
    ingest.add_argument('--dataset', default=None, help="destination (default: data_dir)")

    for name, helptext in (('init-utility', "utility initialization of the encoder"),
                           ('init-recon', "reconstruction initialization of the attacker"),
                           ('train-joint', "joint adversarial training"),
                           ('attack', "from-scratch, nearest-neighbour and oracle attacks"),
                           ('sweep', "privacy / utility trade-off over lambda")):
        p = common(sub.add_parser(name, help=helptext))
        p.add_argument('--lambda', dest='lam', type=float, default=None)
        p.add_argument('--arch', choices=('unet', 'uresnet'), default=None)
        p.add_argument('--resume', default=None, help="last.ckpt of an interrupted run")
        p.add_argument('--theta', default=None, help="encoder checkpoint (default: previous stage)")
        p.add_argument('--phi', default=None, help="inversion checkpoint (default: previous stage)")
        if name == 'attack':
            p.add_argument('--raw', action='store_true', help="attack the raw base descriptor")
            p.add_argument('--images', default=None, help="also reconstruct the images of this folder")
        if name == 'sweep':
            p.add_argument('--lambda-list', dest='lambda_list', default='0,0.1,1,2.5,5,10',
                           help="comma-separated lambda values")
    return parser


def main(argv=None):
    """Run one command; returns the exit status"""
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigKeyError, ConfigValueError) as e:
        logger.error(f"[ERROR] configuration: {e}")
        return 2
    except (NinjaError, FileNotFoundError) as e:
        logger.error(f"[ERROR] {args.command}: {e}")
        return 1


if __name__ == '__main__':
    sys.exit(main())
