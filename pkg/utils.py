"""
Utility functions shared by the training stages, the bench and the CLI
"""

import datetime
import hashlib
import json
import logging
import os
import subprocess

import numpy as np
from tqdm import tqdm

LOGGER_ROOT = 'ninjadesc'


def get_logger(name):
    """
    Logger under the `ninjadesc` root; messages keep the `[TAG] text` style

    Parameters:
    -----------
    name : str
        Module name (usually __name__)

    Returns:
    --------
    logging.Logger
    """
    root = logging.getLogger(LOGGER_ROOT)
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter('%(asctime)s %(name)s %(message)s', '%H:%M:%S'))
        root.addHandler(handler)
        root.setLevel(os.environ.get('NINJA_LOG_LEVEL', 'INFO').upper())
        root.propagate = False
    return logging.getLogger(f"{LOGGER_ROOT}.{name}")


def progress(iterable, **kwargs):
    """tqdm progress bar, silenced with NINJA_PROGRESS=0"""
    disable = os.environ.get('NINJA_PROGRESS', '1') == '0'
    return tqdm(iterable, disable=disable, leave=False, **kwargs)


def num_workers():
    """Data-preparation parallelism bound (env NINJA_NUM_WORKERS, default 1)"""
    try:
        return max(1, int(os.environ.get('NINJA_NUM_WORKERS', '1')))
    except ValueError:
        return 1


# ============================================================================
# HASHING
# ============================================================================

def file_sha256(path):
    """sha256 hex digest of a file"""
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def state_hash(module):
    """
    sha256 over every parameter and buffer of a torch module

    Used to prove which network a training sub-step changed.
    """
    digest = hashlib.sha256()
    for key, value in module.state_dict().items():
        digest.update(key.encode('utf-8'))
        digest.update(np.ascontiguousarray(value.detach().cpu().numpy()).tobytes())
    return digest.hexdigest()


# ============================================================================
# RUN MANIFESTS
# ============================================================================

def git_describe():
    """`git describe --always --dirty` of the working tree, 'unknown' outside git"""
    try:
        result = subprocess.run(['git', 'describe', '--always', '--dirty'],
                                capture_output=True, text=True, timeout=10,
                                cwd=os.path.dirname(os.path.abspath(__file__)))
    except (OSError, subprocess.SubprocessError):
        return 'unknown'
    return result.stdout.strip() if result.returncode == 0 else 'unknown'


def write_run_manifest(out_dir, command, config, outputs=()):
    """
    Write manifest.json describing a finished command

    Parameters:
    -----------
    out_dir : str
        Command output directory
    command : str
        Command name
    config : ExperimentConfig
        Effective configuration
    outputs : iterable of str
        Files written by the command (hashed into the manifest)
    """
    manifest = {
        'command': command,
        'config': config.to_text(),
        'config_hash': config.config_hash,
        'seed': config.seed,
        'git_describe': git_describe(),
        'created': datetime.datetime.now().isoformat(timespec='seconds'),
        'outputs': {os.path.basename(p): file_sha256(p) for p in outputs if os.path.exists(p)},
    }
    path = os.path.join(out_dir, 'manifest.json')
    os.makedirs(out_dir, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
    return path


def write_json(data, path):
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(data, f, indent=2, sort_keys=True, default=float)
    return path


# ============================================================================
# FORMATTING
# ============================================================================

def format_metric(name, value):
    """Format a metric value for log lines"""
    if name.lower() == 'psnr':
        return f"{value:.2f} dB" if np.isfinite(value) else "inf dB"
    return f"{value:.4f}"


def format_lambda(value):
    """Directory-safe spelling of a privacy parameter, e.g. 2.5 -> 'lam2.5'"""
    return f"lam{value:g}"
