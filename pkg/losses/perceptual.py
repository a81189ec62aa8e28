"""
Frozen feature extractors for the perceptual loss

An extractor is a chain of stages; the output of every stage is one tap.
`random` builds a seeded stride-2 conv stack (three taps at 1/2, 1/4, 1/8
resolution); `vgg16` taps torchvision's VGG16 features at module indices
2, 9 and 16 with ImageNet input normalization. Either can load its weights
from a checkpoint-format file (net name `perceptual`).
"""

import torch
from torch import nn

from config import LOSS_PARAMS
from core.checkpoint import load_checkpoint
from core.rng import seeded_torch
from utils import get_logger

logger = get_logger(__name__)

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


class TapExtractor(nn.Module):
    """Frozen chain of stages returning every stage output"""

    def __init__(self, stages, mean=None, std=None):
        super().__init__()
        self.stages = nn.ModuleList(stages)
        self.normalize = mean is not None
        if self.normalize:
            self.register_buffer('mean', torch.tensor(mean).view(1, -1, 1, 1))
            self.register_buffer('std', torch.tensor(std).view(1, -1, 1, 1))
        freeze(self)

    def train(self, mode=True):
        # frozen: batch statistics and dropout never switch on
        return super().train(False)

    def forward(self, x):
        if self.normalize:
            x = (x - self.mean.to(x.dtype)) / self.std.to(x.dtype)
        taps = []
        for stage in self.stages:
            x = stage(x)
            taps.append(x)
        return taps


def freeze(module):
    for p in module.parameters():
        p.requires_grad_(False)
    module.eval()
    return module


def random_extractor(seed=LOSS_PARAMS['perceptual_seed'], widths=LOSS_PARAMS['perceptual_widths']):
    """Seeded random conv stack, one stride-2 stage per width"""
    stages = []
    in_channels = 3
    with seeded_torch(seed, 3):
        for width in widths:
            stages.append(nn.Sequential(
                nn.Conv2d(in_channels, width, kernel_size=3, stride=2, padding=1),
                nn.ReLU(),
            ))
            in_channels = width
    return TapExtractor(stages)


def vgg16_extractor(pretrained=True, taps=LOSS_PARAMS['vgg_taps']):
    """VGG16 feature stack cut after each tap index"""
    from torchvision.models import vgg16, VGG16_Weights

    weights = VGG16_Weights.IMAGENET1K_V1 if pretrained else None
    features = vgg16(weights=weights).features
    stages, start = [], 0
    for tap in taps:
        stages.append(nn.Sequential(*[features[i] for i in range(start, tap + 1)]))
        start = tap + 1
    return TapExtractor(stages, mean=IMAGENET_MEAN, std=IMAGENET_STD)


def build_perceptual_extractor(config):
    """
    Extractor named by config.perceptual_source, optionally loading
    config.perceptual_weights

    Returns:
    --------
    TapExtractor
    """
    weights_path = config.perceptual_weights
    if config.perceptual_source == 'vgg16':
        extractor = vgg16_extractor(pretrained=not weights_path)
    else:
        extractor = random_extractor()
    if weights_path:
        load_checkpoint(weights_path).restore_module('perceptual', extractor)
        freeze(extractor)
        logger.info(f"[LOAD] perceptual weights from {weights_path}")
    return extractor


def identity_extractor():
    """Single tap psi(x) = x; the perceptual loss then equals the MSE"""
    return TapExtractor([nn.Identity()])
