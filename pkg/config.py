"""
Configuration file for the NinjaDesc desk laboratory
Default parameters, experiment configuration and the flat key = value loader
"""

import dataclasses
import hashlib
import os

from core.errors import ConfigKeyError, ConfigValueError


# Harris corner detector (canonical defaults)
HARRIS_PARAMS = {
    'k': 0.04,              # Harris sensitivity in R = det(M) - k*trace(M)^2
    'sigma': 1.0,           # px, Gaussian window of the structure tensor
    'nms_radius': 4,        # px, Chebyshev suppression radius
    'rel_threshold': 0.01,  # fraction of max response a corner must exceed
    'max_count': 1000,      # keypoint budget per image
}

# Gradient-histogram base descriptor (SIFT-like, 32x32 patches)
GRADHIST_PARAMS = {
    'patch_size': 32,       # px
    'cells': 4,             # 4x4 spatial cells
    'bins': 8,              # orientation bins per cell
    'clamp': 0.2,           # SIFT clamp after the first L2 normalization
    'window_sigma': 16.0,   # px, Gaussian weighting of gradient magnitudes
}

# Content-concealing encoder
NINJANET_PARAMS = {
    'dim': 128,             # C, descriptor dimensionality
    'submodules': 1,        # N, no FPR@95 gain observed for N > 1
    'dropout': 0.1,
    'init_noise': 0.01,     # std of the residual-branch weights at init
}

# Descriptor inversion networks
INVERSION_PARAMS = {
    'arch': 'unet',         # unet | uresnet
    'base_width': 16,       # desk scale (full scale: 64)
    'unet_depth': 5,        # number of 2x down-sampling levels
    'uresnet_stem_blocks': 4,
    'uresnet_stages': 5,
    'zero_init_head': True, # all-zero input then decodes to a constant 0.5 image
}

# Losses
LOSS_PARAMS = {
    'triplet_margin': 1.0,
    'perceptual_source': 'random',      # random | vgg16
    'perceptual_weights': '',           # optional weights file (checkpoint blob format)
    'perceptual_seed': 1234,            # seed of the frozen random extractor
    'perceptual_widths': (16, 32, 64),  # channels of the three random stages
    'vgg_taps': (2, 9, 16),             # VGG16 feature-module indices
}

# Training stages (desk scale; full-scale values in FULL_SCALE)
TRAINING_PARAMS = {
    'lambda': 0.0,
    'lr_utility': 0.01,
    'lr_recon': 1e-3,
    'lr_theta': 5e-5,
    'lr_phi': 5e-5,
    'lr_attack': 1e-3,
    'adam_betas': (0.9, 0.999),
    'batch_patches': 64,
    'batch_images': 8,
    'epochs_utility': 20,
    'epochs_recon': 20,
    'epochs_joint': 5,
    'epochs_attack': 20,
    'recon_select': 'max_ssim',   # max_ssim | min_ssim
    'split': (0.6, 0.1, 0.3),     # train / val / test
}

# Synthetic homography pairs
SYNTH_PARAMS = {
    'max_rotation_deg': 15.0,
    'max_scale': 1.15,            # scale drawn from [1/max_scale, max_scale]
    'max_translation_px': 4.0,
    'min_abs_det': 1e-8,          # degenerate homographies are redrawn
}

# Evaluation bench
EVAL_PARAMS = {
    'ssim_window': 11,
    'ssim_sigma': 1.5,
    'ssim_k1': 0.01,
    'ssim_k2': 0.03,
    'mma_thresholds': tuple(range(1, 11)),  # px
    'nn_database_size': 8000,               # full scale: 128,000
    'oracle_k_grid': (1, 2, 5, 10, 20, 50, 100, 200, 500, 1000),
}

# Checkpoint file format
CHECKPOINT_FORMAT = {
    'magic': b'NJDC',
    'version': 1,
}

# Full-scale experiment values
FULL_SCALE = {
    'batch_patches_utility': 1024,
    'lr_utility': 0.01,
    'batch_images': 64,
    'lr_recon': 1e-4,
    'batch_patches_joint': 968,
    'lr_joint_learned': 5e-5,   # SOSNet / HardNet
    'lr_joint_sift': 1e-5,
    'epochs_utility': 200,
    'epochs_recon': 200,
    'epochs_joint': 20,
    'base_width': 64,
    'keypoint_budget': 1000,
    'nn_database_size': 128000,
}


# ============================================================================
# EXPERIMENT CONFIGURATION
# ============================================================================

@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """
    Versioned run configuration. Every field maps to one `key = value` line
    of a config file; `lambda` is spelled `lam` in Python.
    """
    lam: float = TRAINING_PARAMS['lambda']
    lr_utility: float = TRAINING_PARAMS['lr_utility']
    lr_recon: float = TRAINING_PARAMS['lr_recon']
    lr_theta: float = TRAINING_PARAMS['lr_theta']
    lr_phi: float = TRAINING_PARAMS['lr_phi']
    lr_attack: float = TRAINING_PARAMS['lr_attack']
    batch_patches: int = TRAINING_PARAMS['batch_patches']
    batch_images: int = TRAINING_PARAMS['batch_images']
    epochs_utility: int = TRAINING_PARAMS['epochs_utility']
    epochs_recon: int = TRAINING_PARAMS['epochs_recon']
    epochs_joint: int = TRAINING_PARAMS['epochs_joint']
    epochs_attack: int = TRAINING_PARAMS['epochs_attack']
    seed: int = 0
    descriptor_dim: int = NINJANET_PARAMS['dim']
    keypoint_budget: int = 100
    image_size: int = 64
    patch_size: int = GRADHIST_PARAMS['patch_size']
    arch: str = INVERSION_PARAMS['arch']
    base_width: int = INVERSION_PARAMS['base_width']
    unet_depth: int = INVERSION_PARAMS['unet_depth']
    ninjanet_submodules: int = NINJANET_PARAMS['submodules']
    dropout: float = NINJANET_PARAMS['dropout']
    triplet_margin: float = LOSS_PARAMS['triplet_margin']
    harris_k: float = HARRIS_PARAMS['k']
    harris_sigma: float = HARRIS_PARAMS['sigma']
    nms_radius: int = HARRIS_PARAMS['nms_radius']
    harris_rel_threshold: float = HARRIS_PARAMS['rel_threshold']
    recon_select: str = TRAINING_PARAMS['recon_select']
    split_train: float = TRAINING_PARAMS['split'][0]
    split_val: float = TRAINING_PARAMS['split'][1]
    provider: str = 'gradhist'
    perceptual_source: str = LOSS_PARAMS['perceptual_source']
    perceptual_weights: str = LOSS_PARAMS['perceptual_weights']
    nn_database_size: int = EVAL_PARAMS['nn_database_size']
    max_rotation_deg: float = SYNTH_PARAMS['max_rotation_deg']
    max_scale: float = SYNTH_PARAMS['max_scale']
    max_translation_px: float = SYNTH_PARAMS['max_translation_px']
    data_dir: str = 'runs/dataset'

    def __post_init__(self):
        validate_config(self)

    def replace(self, **changes):
        """Return a copy with some fields changed (validated again)"""
        return dataclasses.replace(self, **changes)

    def to_text(self):
        """Canonical text: sorted `key = value` lines"""
        values = config_to_dict(self)
        return ''.join(f"{key} = {_format_value(values[key])}\n" for key in sorted(values))

    @property
    def config_hash(self):
        return hashlib.sha256(self.to_text().encode('utf-8')).hexdigest()


# File keys differ from field names only where Python reserves the word
_FIELD_TO_KEY = {'lam': 'lambda'}
_KEY_TO_FIELD = {v: k for k, v in _FIELD_TO_KEY.items()}


def expected_keys():
    """All keys a config file must define, sorted"""
    return sorted(_FIELD_TO_KEY.get(f.name, f.name) for f in dataclasses.fields(ExperimentConfig))


def config_to_dict(config):
    """Map an ExperimentConfig to {file key: value}"""
    return {_FIELD_TO_KEY.get(f.name, f.name): getattr(config, f.name)
            for f in dataclasses.fields(config)}


def _format_value(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(field, raw):
    if field.type in (int, 'int'):
        return int(raw)
    if field.type in (float, 'float'):
        return float(raw)
    return raw


def validate_config(config):
    """
    Check value ranges of a configuration

    Raises:
    -------
    ConfigValueError
        If any value is out of its declared range
    """
    problems = []
    if config.lam < 0:
        problems.append(f"lambda must be >= 0, got {config.lam}")
    for name in ('lr_utility', 'lr_recon', 'lr_theta', 'lr_phi', 'lr_attack'):
        if getattr(config, name) <= 0:
            problems.append(f"{name} must be > 0, got {getattr(config, name)}")
    if config.seed < 0:
        problems.append(f"seed must be >= 0, got {config.seed}")
    if config.arch not in ('unet', 'uresnet'):
        problems.append(f"arch must be unet or uresnet, got {config.arch!r}")
    if config.recon_select not in ('max_ssim', 'min_ssim'):
        problems.append(f"recon_select must be max_ssim or min_ssim, got {config.recon_select!r}")
    if config.perceptual_source not in ('random', 'vgg16'):
        problems.append(f"perceptual_source must be random or vgg16, got {config.perceptual_source!r}")
    if config.image_size % 32 or config.image_size % (2 ** config.unet_depth):
        problems.append(f"image_size must be divisible by 32 and 2^unet_depth, got {config.image_size}")
    if config.batch_patches < 2:
        problems.append("batch_patches must be >= 2 (hardest-negative mining)")
    if not (0 < config.split_train and 0 <= config.split_val and config.split_train + config.split_val < 1):
        problems.append("split_train + split_val must lie in (0, 1)")
    if config.keypoint_budget < 1 or config.descriptor_dim < 1:
        problems.append("keypoint_budget and descriptor_dim must be >= 1")
    if problems:
        raise ConfigValueError('; '.join(problems))


def parse_config_text(text):
    """
    Parse flat `key = value` text into an ExperimentConfig

    Parameters:
    -----------
    text : str
        Config file contents; `#` starts a comment

    Returns:
    --------
    ExperimentConfig
    """
    raw = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigValueError(f"line {line_no}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split('=', 1))
        raw[key] = value

    keys = expected_keys()
    unknown = sorted(set(raw) - set(keys))
    if unknown:
        raise ConfigKeyError(unknown[0], keys, reason='unknown')
    for key in keys:
        if key not in raw:
            raise ConfigKeyError(key, keys)

    fields = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
    values = {}
    for key, value in raw.items():
        name = _KEY_TO_FIELD.get(key, key)
        try:
            values[name] = _coerce(fields[name], value)
        except ValueError as e:
            raise ConfigValueError(f"{key}: {e}") from e
    return ExperimentConfig(**values)


def load_config(path):
    """Load an ExperimentConfig from a config file"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        return parse_config_text(f.read())


def save_config(config, path):
    """Write the canonical text of a config"""
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(config.to_text())
