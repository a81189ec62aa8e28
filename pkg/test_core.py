"""
Tests for domain types, configuration, random streams and checkpoints
"""

import os
import struct
import sys

import numpy as np
import pytest
import torch

from config import ExperimentConfig, expected_keys, load_config, parse_config_text, save_config
from core.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from core.errors import (CheckpointCorruptError, CheckpointVersionError, ConfigKeyError, ConfigValueError,
                         DescriptorDimensionError, ShapeMismatchError)
from core.rng import seed_rng, seeded_torch
from core.types import Descriptor, ImageSample, Keypoint, PatchTripletBatch, l2_normalize
from models.ninjanet import build_ninjanet
from training.common import adam

REPO = os.path.dirname(os.path.abspath(__file__))


# ============================================================================
# TYPES
# ============================================================================

def test_descriptor_norm_invariant():
    values = l2_normalize(np.arange(1.0, 129.0))
    assert Descriptor(values).dim == 128
    with pytest.raises(ValueError):
        Descriptor(values * 1.01)
    assert Descriptor(values * 3.0, norm_flag=False).dim == 128
    with pytest.raises(DescriptorDimensionError):
        Descriptor(values).check_dim(64)


def test_descriptor_rejects_non_finite():
    with pytest.raises(ValueError):
        Descriptor([np.nan, 1.0], norm_flag=False)


def test_l2_normalize_zero_row():
    out = l2_normalize(np.zeros((2, 4)))
    assert np.allclose(out, 0.5)


def test_image_sample_invariants():
    image = np.full((8, 8, 3), 0.5)
    sample = ImageSample(image, [Keypoint(1, 2, 0.3)], 'a')
    assert (sample.height, sample.width) == (8, 8)
    with pytest.raises(ValueError):
        ImageSample(image, [Keypoint(8, 0)], 'b')
    with pytest.raises(ValueError):
        ImageSample(image * 2.5, [], 'c')
    with pytest.raises(ValueError):
        ImageSample(image, [Keypoint(i % 8, i // 8) for i in range(5)], 'd', budget=4)
    with pytest.raises(ShapeMismatchError):
        ImageSample(np.zeros((8, 8)), [], 'e')


def test_patch_batch_requires_distinct_labels():
    patches = np.zeros((2, 32, 32))
    assert len(PatchTripletBatch(patches, patches, np.array([1, 2]))) == 2
    with pytest.raises(ValueError):
        PatchTripletBatch(patches, patches, np.array([3, 3]))


# ============================================================================
# CONFIGURATION
# ============================================================================

def test_shipped_configs_load():
    desk = load_config(os.path.join(REPO, 'configs', 'desk.cfg'))
    full = load_config(os.path.join(REPO, 'configs', 'full.cfg'))
    assert desk == ExperimentConfig()
    assert full.base_width == 64 and full.keypoint_budget == 1000


def test_config_missing_key_names_it():
    text = ExperimentConfig().to_text()
    stripped = ''.join(line + '\n' for line in text.splitlines() if not line.startswith('lr_phi'))
    with pytest.raises(ConfigKeyError) as info:
        parse_config_text(stripped)
    assert info.value.key == 'lr_phi'
    assert info.value.expected == expected_keys()


def test_config_unknown_key():
    with pytest.raises(ConfigKeyError):
        parse_config_text(ExperimentConfig().to_text() + "colour = blue\n")


@pytest.mark.parametrize('change', [
    {'lam': -0.1}, {'lr_theta': 0.0}, {'arch': 'resnet'}, {'seed': -1}, {'image_size': 48},
])
def test_config_value_validation(change):
    with pytest.raises(ConfigValueError):
        ExperimentConfig().replace(**change)


def test_config_text_round_trip(tmp_path):
    config = ExperimentConfig(lam=2.5, seed=7, arch='uresnet')
    path = str(tmp_path / 'run.cfg')
    save_config(config, path)
    loaded = load_config(path)
    assert loaded == config
    assert loaded.config_hash == config.config_hash
    assert config.config_hash != ExperimentConfig().config_hash


# ============================================================================
# RANDOM STREAMS
# ============================================================================

def test_seed_rng_streams():
    a, b = seed_rng(7), seed_rng(7)
    assert np.array_equal(a.fork(3).numpy.random(5), b.fork(3).numpy.random(5))
    assert not np.array_equal(seed_rng(7).fork(3).numpy.random(5), seed_rng(7).fork(4).numpy.random(5))
    assert seed_rng(0).seed == 0
    with pytest.raises(ValueError):
        seed_rng(-1)


def test_seeded_torch_restores_global_state():
    torch.manual_seed(123)
    expected = torch.rand(3)
    torch.manual_seed(123)
    with seeded_torch(5, 1):
        inside = torch.rand(3)
    after = torch.rand(3)
    assert torch.equal(after, expected)
    with seeded_torch(5, 1):
        assert torch.equal(torch.rand(3), inside)


def test_ninjanet_init_depends_on_seed():
    config = ExperimentConfig()
    same = [build_ninjanet(config.replace(seed=7)) for _ in range(2)]
    other = build_ninjanet(config.replace(seed=8))
    for p, q, r in zip(same[0].parameters(), same[1].parameters(), other.parameters()):
        assert torch.equal(p, q)
    assert any(not torch.equal(p, r) for p, r in zip(same[0].parameters(), other.parameters()))


# ============================================================================
# CHECKPOINTS
# ============================================================================

@pytest.fixture
def saved(tmp_path):
    config = ExperimentConfig(seed=3)
    theta = build_ninjanet(config)
    optimizer = adam(theta, 0.01)
    loss = theta(torch.randn(4, config.descriptor_dim)).sum()
    loss.backward()
    optimizer.step()
    path = save_checkpoint({'theta': theta, 'theta_opt': optimizer}, config, str(tmp_path / 'theta.ckpt'),
                           epoch=4, metric=0.25, extra={'lambda': 1.5})
    return config, theta, optimizer, path


def test_checkpoint_round_trip_bit_exact(saved):
    config, theta, _, path = saved
    ckpt = load_checkpoint(path)
    restored = ckpt.restore_module('theta', build_ninjanet(config.replace(seed=99)))
    for (name, p), q in zip(theta.state_dict().items(), restored.state_dict().values()):
        assert torch.equal(p, q), name
    assert ckpt.config == config
    assert ckpt.epoch == 4 and ckpt.metric == 0.25
    assert ckpt.meta['extra'] == {'lambda': 1.5}


def test_checkpoint_restores_optimizer(saved):
    config, theta, optimizer, path = saved
    fresh = build_ninjanet(config)
    load_checkpoint(path).restore_module('theta', fresh)
    fresh_opt = load_checkpoint(path).restore_optimizer('theta_opt', adam(fresh, 0.01))
    original = optimizer.state_dict()['state'][0]
    restored = fresh_opt.state_dict()['state'][0]
    assert torch.equal(original['exp_avg'], restored['exp_avg'])
    assert float(original['step']) == float(restored['step'])


def test_checkpoint_version_error(saved):
    *_, path = saved
    with open(path, 'rb') as f:
        data = bytearray(f.read())
    assert bytes(data[:4]) == MAGIC
    data[4:8] = struct.pack('<I', 2)
    with open(path, 'wb') as f:
        f.write(bytes(data))
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(path)


def test_checkpoint_truncated(saved):
    *_, path = saved
    with open(path, 'rb') as f:
        data = f.read()
    with open(path, 'wb') as f:
        f.write(data[:-1])
    with pytest.raises(CheckpointCorruptError):
        load_checkpoint(path)


def test_checkpoint_checksum(saved):
    *_, path = saved
    with open(path, 'rb') as f:
        data = bytearray(f.read())
    data[len(data) // 2] ^= 0xFF
    with open(path, 'wb') as f:
        f.write(bytes(data))
    with pytest.raises(CheckpointCorruptError):
        load_checkpoint(path)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
