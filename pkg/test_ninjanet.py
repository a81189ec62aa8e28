"""
Tests for the NinjaNet encoder
"""

import sys

import numpy as np
import pytest
import torch

from config import ExperimentConfig
from core.errors import DescriptorDimensionError
from core.rng import seed_rng
from core.types import Descriptor, l2_normalize
from models.ninjanet import (NinjaNet, build_ninjanet, dropout_mask, encode_descriptors, identity_init,
                             ninjanet_backward, ninjanet_forward)


def unit_histogram(dim, seed):
    return Descriptor(l2_normalize(np.random.default_rng(seed).random(dim)))


def finite_difference(model, loss_fn, name, index, step=1e-5):
    param = dict(model.named_parameters())[name]
    with torch.no_grad():
        original = param[index].item()
        param[index] = original + step
        up = loss_fn().item()
        param[index] = original - step
        down = loss_fn().item()
        param[index] = original
    return (up - down) / (2 * step)


def test_identity_init_returns_input():
    model = identity_init(NinjaNet(dim=16, dropout=0.0))
    d = unit_histogram(16, 0)
    out = ninjanet_forward(model, d)
    assert np.allclose(out.values, d.values, atol=1e-6)


def test_identity_init_returns_signed_input():
    model = identity_init(NinjaNet(dim=128, submodules=2, dropout=0.0))
    d = Descriptor(l2_normalize(np.random.default_rng(4).normal(size=128)))
    assert (d.values < 0).any()
    out = ninjanet_forward(model, d)
    assert np.allclose(out.values, d.values, atol=1e-6)


def test_near_identity_init_stays_close():
    model = build_ninjanet(ExperimentConfig(seed=2))
    base = l2_normalize(np.random.default_rng(6).normal(size=(10, 128)))
    out = encode_descriptors(model, base)
    assert np.max(np.abs(out - base)) < 0.1
    assert not np.allclose(out, base, atol=1e-9)


def test_eval_mode_deterministic():
    model = build_ninjanet(ExperimentConfig(seed=3))
    d = unit_histogram(128, 1)
    a = ninjanet_forward(model, d, train_mode=False)
    b = ninjanet_forward(model, d, train_mode=False)
    assert np.array_equal(a.values, b.values)


def test_output_unit_norm_random_params():
    torch.manual_seed(0)
    model = NinjaNet(dim=32, submodules=3)
    base = l2_normalize(np.random.default_rng(2).normal(size=(20, 32)))
    out = encode_descriptors(model, base)
    assert out.shape == (20, 32)
    assert np.allclose(np.linalg.norm(out, axis=1), 1.0, atol=1e-5)


def test_train_mode_dropout_reproducible_from_seed():
    model = build_ninjanet(ExperimentConfig())
    d = unit_histogram(128, 3)
    a = ninjanet_forward(model, d, train_mode=True, rng=seed_rng(5).fork(1))
    b = ninjanet_forward(model, d, train_mode=True, rng=seed_rng(5).fork(1))
    assert np.array_equal(a.values, b.values)
    assert model.training


def test_dim_mismatch():
    model = NinjaNet(dim=16)
    with pytest.raises(DescriptorDimensionError):
        ninjanet_forward(model, unit_histogram(8, 0))
    with pytest.raises(DescriptorDimensionError):
        model(torch.zeros(2, 8))
    with pytest.raises(ValueError):
        NinjaNet(dim=16, submodules=0)


def test_submodule_count_from_config():
    model = build_ninjanet(ExperimentConfig(ninjanet_submodules=3))
    assert len(model.blocks) == 3


# ============================================================================
# GRADIENTS
# ============================================================================

def test_gradcheck_input():
    torch.manual_seed(1)
    model = NinjaNet(dim=8, submodules=2).double().eval()
    x = torch.rand(3, 8, dtype=torch.float64, requires_grad=True)
    assert torch.autograd.gradcheck(lambda t: model(t), (x,), eps=1e-6, atol=1e-8)


def test_backward_matches_finite_differences():
    torch.manual_seed(2)
    model = NinjaNet(dim=6, submodules=1).double().eval()
    x = torch.rand(4, 6, dtype=torch.float64)
    upstream = torch.randn(4, 6, dtype=torch.float64)
    outputs = model(x)
    grads = ninjanet_backward(model, outputs, upstream)

    def scalar_loss():
        return (model(x) * upstream).sum()

    for name, index in (('blocks.0.linear.weight', (1, 2)), ('blocks.0.linear.weight', (4, 0)),
                        ('blocks.0.linear.bias', (3,))):
        numeric = finite_difference(model, scalar_loss, name, index)
        analytic = grads[name][index].item()
        assert abs(analytic - numeric) <= 1e-4 * max(1.0, abs(numeric))


def test_zero_upstream_gives_zero_gradients():
    model = NinjaNet(dim=6).double()
    outputs = model(torch.rand(2, 6, dtype=torch.float64))
    grads = ninjanet_backward(model, outputs, torch.zeros_like(outputs))
    assert all(torch.count_nonzero(g) == 0 for g in grads.values())


def test_dropout_blocks_gradient_of_dropped_units():
    torch.manual_seed(3)
    model = NinjaNet(dim=32, submodules=1, dropout=0.5).double().train()
    x = torch.rand(1, 32, dtype=torch.float64)
    mask = dropout_mask((1, 32), 0.5, torch.Generator().manual_seed(11), dtype=torch.float64)
    outputs = model(x, generator=torch.Generator().manual_seed(11))
    grads = ninjanet_backward(model, outputs, torch.randn_like(outputs))
    dropped = mask[0] == 0
    assert dropped.any() and (~dropped).any()
    assert torch.all(grads['blocks.0.linear.bias'][dropped] == 0)
    assert torch.all(grads['blocks.0.linear.weight'][dropped] == 0)


def test_masked_gradient_matches_finite_differences():
    torch.manual_seed(5)
    model = NinjaNet(dim=8, submodules=1, dropout=0.5).double().train()
    x = torch.rand(2, 8, dtype=torch.float64)
    upstream = torch.randn(2, 8, dtype=torch.float64)

    def masked_loss():
        return (model(x, generator=torch.Generator().manual_seed(21)) * upstream).sum()

    outputs = model(x, generator=torch.Generator().manual_seed(21))
    grads = ninjanet_backward(model, outputs, upstream)
    for index in ((0, 0), (2, 5), (7, 3), (4, 4)):
        numeric = finite_difference(model, masked_loss, 'blocks.0.linear.weight', index)
        analytic = grads['blocks.0.linear.weight'][index].item()
        assert abs(analytic - numeric) <= 1e-4 * max(1.0, abs(numeric))
    for index in range(8):
        numeric = finite_difference(model, masked_loss, 'blocks.0.linear.bias', (index,))
        assert abs(grads['blocks.0.linear.bias'][index].item() - numeric) <= 1e-4 * max(1.0, abs(numeric))


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
