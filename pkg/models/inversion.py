"""
Descriptor inversion networks Phi: UNet and UResNet

Both take a C x H x W sparse feature map and predict a 3 x H x W image in
[0, 1] through a sigmoid head. UNet skips concatenate encoder features;
UResNet skips add them.
"""

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

from config import INVERSION_PARAMS
from core.errors import ShapeMismatchError
from core.rng import seeded_torch


# ============================================================================
# BUILDING BLOCKS
# ============================================================================

class ConvBlock(nn.Module):
    """(conv3x3 -> BN -> ReLU) x 2"""

    def __init__(self, in_channels, out_channels):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv2d(in_channels, out_channels, kernel_size=3, padding=1),
            nn.BatchNorm2d(out_channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1),
            nn.BatchNorm2d(out_channels),
            nn.ReLU(inplace=True),
        )

    def forward(self, x):
        return self.body(x)


class BasicResBlock(nn.Module):
    """ResNet basic block; projection shortcut when shape changes"""

    def __init__(self, in_channels, out_channels, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(in_channels, out_channels, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(out_channels)
        self.conv2 = nn.Conv2d(out_channels, out_channels, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.shortcut = nn.Identity()
        if stride != 1 or in_channels != out_channels:
            self.shortcut = nn.Sequential(
                nn.Conv2d(in_channels, out_channels, 1, stride=stride, bias=False),
                nn.BatchNorm2d(out_channels),
            )

    def forward(self, x):
        out = torch.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return torch.relu(out + self.shortcut(x))


class UpResBlock(nn.Module):
    """Bilinear 2x up-sampling followed by a residual block"""

    def __init__(self, in_channels, out_channels):
        super().__init__()
        self.block = BasicResBlock(in_channels, out_channels)

    def forward(self, x):
        x = F.interpolate(x, scale_factor=2, mode='bilinear', align_corners=False)
        return self.block(x)


def _check_input(x, in_channels, levels):
    if x.dim() != 4 or x.shape[1] != in_channels:
        raise ShapeMismatchError(f"expected N x {in_channels} x H x W feature maps, got {tuple(x.shape)}")
    if x.shape[2] % (2 ** levels) or x.shape[3] % (2 ** levels):
        raise ShapeMismatchError(f"H and W must be multiples of {2 ** levels}, got {tuple(x.shape[2:])}")


# ============================================================================
# UNET
# ============================================================================

class UNet(nn.Module):
    """
    Encoder levels 0..depth (width base * 2^min(l, 4)), max-pool down,
    transposed-conv up, concatenated skips, 1x1 sigmoid head
    """

    def __init__(self, in_channels, base_width=INVERSION_PARAMS['base_width'],
                 depth=INVERSION_PARAMS['unet_depth'], zero_init_head=INVERSION_PARAMS['zero_init_head']):
        super().__init__()
        if depth < 1:
            raise ValueError(f"UNet depth must be >= 1, got {depth}")
        self.in_channels = in_channels
        self.depth = depth
        self.widths = [base_width * 2 ** min(level, 4) for level in range(depth + 1)]
        w = self.widths
        self.encoders = nn.ModuleList(
            [ConvBlock(in_channels, w[0])] + [ConvBlock(w[l - 1], w[l]) for l in range(1, depth + 1)])
        self.pool = nn.MaxPool2d(2)
        self.ups = nn.ModuleList([nn.ConvTranspose2d(w[l + 1], w[l], kernel_size=2, stride=2)
                                  for l in range(depth)])
        self.decoders = nn.ModuleList([ConvBlock(2 * w[l], w[l]) for l in range(depth)])
        self.head = nn.Conv2d(w[0], 3, kernel_size=1)
        if zero_init_head:
            nn.init.zeros_(self.head.weight)
            nn.init.zeros_(self.head.bias)

    def forward(self, x):
        _check_input(x, self.in_channels, self.depth)
        skips = []
        h = self.encoders[0](x)
        for level in range(1, self.depth + 1):
            skips.append(h)
            h = self.encoders[level](self.pool(h))
        for level in reversed(range(self.depth)):
            h = self.ups[level](h)
            h = self.decoders[level](torch.cat([h, skips[level]], dim=1))
        return torch.sigmoid(self.head(h))


# ============================================================================
# URESNET
# ============================================================================

class UResNet(nn.Module):
    """
    Residual stem adapting C channels, strided residual encoder stages
    (each halves the resolution), bilinear residual up blocks, additive skips
    """

    def __init__(self, in_channels, base_width=INVERSION_PARAMS['base_width'],
                 stem_blocks=INVERSION_PARAMS['uresnet_stem_blocks'],
                 stages=INVERSION_PARAMS['uresnet_stages'],
                 zero_init_head=INVERSION_PARAMS['zero_init_head']):
        super().__init__()
        self.in_channels = in_channels
        self.stages = stages
        w = base_width
        self.stem = nn.Sequential(*([BasicResBlock(in_channels, w)] +
                                    [BasicResBlock(w, w) for _ in range(stem_blocks - 1)]))
        # channels of the stem output followed by each stage output
        self.widths = [w] + [w * 2 ** min(i, 3) for i in range(stages)]
        self.encoders = nn.ModuleList([BasicResBlock(self.widths[i], self.widths[i + 1], stride=2)
                                       for i in range(stages)])
        self.ups = nn.ModuleList([UpResBlock(self.widths[i + 1], self.widths[i]) for i in range(stages)])
        self.head = nn.Conv2d(w, 3, kernel_size=3, padding=1)
        if zero_init_head:
            nn.init.zeros_(self.head.weight)
            nn.init.zeros_(self.head.bias)

    def forward(self, x):
        _check_input(x, self.in_channels, self.stages)
        feats = [self.stem(x)]
        for encoder in self.encoders:
            feats.append(encoder(feats[-1]))
        h = feats[-1]
        for i in reversed(range(self.stages)):
            h = self.ups[i](h) + feats[i]
        return torch.sigmoid(self.head(h))


# ============================================================================
# FACTORY / FUNCTIONAL INTERFACE
# ============================================================================

def build_inversion_net(arch, in_channels, base_width=INVERSION_PARAMS['base_width'],
                        depth=INVERSION_PARAMS['unet_depth'], seed=0,
                        zero_init_head=INVERSION_PARAMS['zero_init_head']):
    """
    Fresh inversion network

    Parameters:
    -----------
    arch : str
        'unet' or 'uresnet'
    in_channels : int
        Descriptor dimensionality C
    base_width : int
        Channel width of the first level
    depth : int
        UNet levels (UResNet always uses its configured stage count)
    seed : int
        Initialization seed

    Returns:
    --------
    nn.Module
    """
    with seeded_torch(seed, 2):
        if arch == 'unet':
            return UNet(in_channels, base_width=base_width, depth=depth, zero_init_head=zero_init_head)
        if arch == 'uresnet':
            return UResNet(in_channels, base_width=base_width, zero_init_head=zero_init_head)
    raise ValueError(f"unknown inversion architecture {arch!r}")


def build_from_config(config, seed=None, arch=None):
    return build_inversion_net(arch or config.arch, config.descriptor_dim, base_width=config.base_width,
                               depth=config.unet_depth, seed=config.seed if seed is None else seed)


def inversion_forward(model, fmap):
    """
    Eval-mode reconstruction of one sparse feature map

    Parameters:
    -----------
    model : UNet or UResNet
    fmap : SparseFeatureMap

    Returns:
    --------
    np.ndarray
        h x w x 3 image in [0, 1]
    """
    if fmap.grid.shape[2] != model.in_channels:
        raise ShapeMismatchError(f"feature map has {fmap.grid.shape[2]} channels, "
                                 f"network expects {model.in_channels}")
    was_training = model.training
    model.eval()
    dtype = next(model.parameters()).dtype
    try:
        with torch.no_grad():
            out = model(fmap.to_tensor(dtype=dtype)[None])[0]
    finally:
        model.train(was_training)
    return out.permute(1, 2, 0).double().numpy()


def inversion_backward(model, outputs, upstream):
    """Parameter gradients of a recorded forward pass (name -> tensor)"""
    names, params = zip(*model.named_parameters())
    grads = torch.autograd.grad(outputs, params, grad_outputs=upstream, retain_graph=True, allow_unused=True)
    return {name: (torch.zeros_like(p) if g is None else g) for name, p, g in zip(names, params, grads)}


def to_image_array(batch):
    """N x 3 x H x W tensor -> N x H x W x 3 float64 numpy"""
    return batch.detach().permute(0, 2, 3, 1).double().cpu().numpy()


def to_image_tensor(images, dtype=torch.float32):
    """N x H x W x 3 numpy -> N x 3 x H x W tensor"""
    return torch.as_tensor(np.ascontiguousarray(np.asarray(images).transpose(0, 3, 1, 2)), dtype=dtype)
