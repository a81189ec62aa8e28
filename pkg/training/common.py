"""
Helpers shared by the training stages
"""

import copy
import math
import os

import pandas as pd
import torch

from config import TRAINING_PARAMS
from core.checkpoint import load_checkpoint
from core.errors import NonFiniteLossError

# Stream keys of the stages; epoch streams are rng.fork(STAGE, epoch)
STAGE_UTILITY = 11
STAGE_RECON = 12
STAGE_JOINT = 13
STAGE_ATTACK = 14
STAGE_SWEEP = 15


def adam(module, lr):
    return torch.optim.Adam(module.parameters(), lr=lr, betas=TRAINING_PARAMS['adam_betas'])


def set_requires_grad(module, value):
    for p in module.parameters():
        p.requires_grad_(value)


def check_finite(stage, **losses):
    """Raise NonFiniteLossError when any loss value is NaN or infinite"""
    values = {name: float(v) for name, v in losses.items()}
    bad = [name for name, v in values.items() if not math.isfinite(v)]
    if bad:
        raise NonFiniteLossError(f"{stage}: non-finite loss {', '.join(bad)} ({values})", diagnostics=values)
    return values


def snapshot(module):
    """Detached deep copy (model selection keeps the best epoch)"""
    return copy.deepcopy(module)


def history_frame(rows, columns):
    return pd.DataFrame(rows, columns=columns)


def write_history(frame, path):
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    frame.to_csv(path, index=False, float_format='%.10g')
    return path


def better(metric, best, mode):
    """
    True when `metric` beats `best` (strictly) under 'min' or 'max'.
    Anything beats None, a finite metric beats a non-finite best, and a
    non-finite metric never replaces a recorded best.
    """
    if best is None:
        return True
    if not math.isfinite(metric):
        return False
    if not math.isfinite(best):
        return True
    return metric < best if mode == 'min' else metric > best



def resume_state(resume):
    """Checkpoint of an interrupted stage, or None"""
    if not resume:
        return None
    return load_checkpoint(resume)
