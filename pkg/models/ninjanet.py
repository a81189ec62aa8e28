"""
NinjaNet: the content-concealing encoder

Maps a base descriptor to a NinjaDesc of the same dimensionality C.
Each of the N submodules computes x + dropout(relu(W x + b)); the output
is L2-normalized. The skip connection carries the identity, so with the
branch at W = 0, b = 0 every unit input, signed or not, comes back
unchanged.
"""

import numpy as np
import torch
from torch import nn

from config import NINJANET_PARAMS
from core.errors import DescriptorDimensionError
from core.rng import seeded_torch
from core.types import Descriptor


def dropout_mask(shape, rate, generator, dtype=torch.float32):
    """Inverted-dropout mask drawn from an explicit generator"""
    keep = torch.rand(shape, generator=generator) >= rate
    return keep.to(dtype) / (1.0 - rate)


def safe_l2_normalize(x, eps=1e-12):
    norm = torch.linalg.vector_norm(x, dim=-1, keepdim=True)
    return x / norm.clamp_min(eps)


class NinjaSubmodule(nn.Module):
    """Residual affine block: x + dropout(relu(W x + b))"""

    def __init__(self, dim):
        super().__init__()
        self.linear = nn.Linear(dim, dim)

    def forward(self, x, mask=None):
        branch = torch.relu(self.linear(x))
        if mask is not None:
            branch = branch * mask
        return x + branch


class NinjaNet(nn.Module):
    """
    Encoder Theta of N residual submodules plus output normalization

    Dropout masks come from the generator passed to forward, so a training
    step is reproducible from its seed alone.
    """

    def __init__(self, dim=NINJANET_PARAMS['dim'], submodules=NINJANET_PARAMS['submodules'],
                 dropout=NINJANET_PARAMS['dropout']):
        super().__init__()
        if submodules < 1:
            raise ValueError(f"NinjaNet needs at least one submodule, got {submodules}")
        self.dim = dim
        self.dropout = dropout
        self.blocks = nn.ModuleList([NinjaSubmodule(dim) for _ in range(submodules)])

    def forward(self, d_base, generator=None):
        if d_base.shape[-1] != self.dim:
            raise DescriptorDimensionError(f"NinjaNet expects dim {self.dim}, got {d_base.shape[-1]}")
        x = d_base
        for block in self.blocks:
            mask = None
            if self.training and self.dropout > 0:
                mask = dropout_mask(x.shape, self.dropout, generator, dtype=x.dtype)
            x = block(x, mask)
        return safe_l2_normalize(x)


def identity_init(model, noise=0.0):
    """
    Identity (noise = 0) or near-identity submodules: the residual branch
    gets W = noise * N(0, 1), b = 0, so each block maps x to x + O(noise)
    """
    with torch.no_grad():
        for block in model.blocks:
            weight = torch.zeros_like(block.linear.weight)
            if noise > 0:
                weight = noise * torch.randn_like(weight)
            block.linear.weight.copy_(weight)
            block.linear.bias.zero_()
    return model


def build_ninjanet(config, seed=None):
    """
    Near-identity NinjaNet for a configuration

    Parameters:
    -----------
    config : ExperimentConfig
    seed : int or None
        Initialization seed (config.seed if None)

    Returns:
    --------
    NinjaNet
    """
    seed = config.seed if seed is None else seed
    with seeded_torch(seed, 1):
        model = NinjaNet(dim=config.descriptor_dim, submodules=config.ninjanet_submodules,
                         dropout=config.dropout)
        identity_init(model, noise=NINJANET_PARAMS['init_noise'])
    return model


def ninjanet_forward(model, d_base, train_mode=False, rng=None):
    """
    Encode one base descriptor

    Parameters:
    -----------
    model : NinjaNet
    d_base : Descriptor
    train_mode : bool
        Dropout is active only in train mode
    rng : torch.Generator or RngHandle
        Source of dropout masks (train mode only)

    Returns:
    --------
    Descriptor
        Unit-norm NinjaDesc
    """
    d_base.check_dim(model.dim)
    generator = getattr(rng, 'torch', rng)
    was_training = model.training
    model.train(train_mode)
    try:
        with torch.no_grad():
            dtype = next(model.parameters()).dtype
            out = model(torch.as_tensor(d_base.values, dtype=dtype)[None], generator=generator)[0]
    finally:
        model.train(was_training)
    return Descriptor(out.double().numpy())


def encode_descriptors(model, base, batch_size=4096):
    """Eval-mode NinjaDesc of an (N, C) array, returned as float64 numpy"""
    was_training = model.training
    model.eval()
    dtype = next(model.parameters()).dtype
    chunks = []
    try:
        with torch.no_grad():
            for start in range(0, len(base), batch_size):
                chunk = torch.as_tensor(base[start:start + batch_size], dtype=dtype)
                chunks.append(model(chunk).double().numpy())
    finally:
        model.train(was_training)
    if not chunks:
        return np.zeros((0, model.dim))
    return np.concatenate(chunks)


def ninjanet_backward(model, outputs, upstream):
    """
    Parameter gradients of a recorded forward pass

    Parameters:
    -----------
    model : NinjaNet
    outputs : torch.Tensor
        Result of a forward pass with autograd recording
    upstream : torch.Tensor
        dLoss/dOutputs, same shape as outputs

    Returns:
    --------
    dict
        parameter name -> gradient tensor
    """
    names, params = zip(*model.named_parameters())
    grads = torch.autograd.grad(outputs, params, grad_outputs=upstream, retain_graph=True,
                                allow_unused=True)
    return {name: (torch.zeros_like(p) if g is None else g) for name, p, g in zip(names, params, grads)}
