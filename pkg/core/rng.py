"""
Seeded random streams

One RngHandle owns a numpy Generator (shuffling, warps, splits) and a torch
Generator (dropout masks). Network initialization draws from torch's global
stream inside `seeded_torch(...)`, so building a model never disturbs the
caller's streams. Handles are single-owner; derive per-worker / per-epoch
streams with `fork`.
"""

import contextlib
import dataclasses

import numpy as np
import torch


@dataclasses.dataclass
class RngHandle:
    seed: int
    key: tuple
    numpy: np.random.Generator
    torch: torch.Generator

    def fork(self, *index):
        """Independent child stream identified by (seed, key..., index...)"""
        return _make_handle(self.seed, self.key + tuple(int(i) for i in index))

    def torch_seed(self):
        """Deterministic 63-bit integer for seeding a fresh torch stream"""
        return int(np.random.SeedSequence([self.seed, *self.key]).generate_state(2, np.uint64)[0] >> np.uint64(1))


def _make_handle(seed, key):
    sequence = np.random.SeedSequence([seed, *key])
    numpy_rng = np.random.Generator(np.random.PCG64(sequence))
    torch_rng = torch.Generator()
    torch_rng.manual_seed(int(sequence.generate_state(2, np.uint64)[0] >> np.uint64(1)))
    return RngHandle(seed=seed, key=tuple(key), numpy=numpy_rng, torch=torch_rng)


def seed_rng(seed):
    """
    Create the root random stream of a run

    Parameters:
    -----------
    seed : int
        Non-negative run seed

    Returns:
    --------
    RngHandle
    """
    if seed < 0:
        raise ValueError(f"seed must be >= 0, got {seed}")
    torch.use_deterministic_algorithms(True, warn_only=True)
    return _make_handle(int(seed), ())


@contextlib.contextmanager
def seeded_torch(seed, *key):
    """Run a block with torch's global stream seeded from (seed, key...), restoring it afterwards"""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(_make_handle(int(seed), tuple(key)).torch_seed())
        yield
