"""
Evaluation bench: image quality, descriptor utility, MMA, inversion attacks, trade-off sweep

Attack and sweep modules import the training stages; import them as
`evalbench.attacks` / `evalbench.sweep`.
"""

from .descriptor_metrics import fpr95, map_matching, map_retrieval, map_verification
from .quality import mae_metric, psnr, ssim

__all__ = ['fpr95', 'map_matching', 'map_retrieval', 'map_verification', 'mae_metric', 'psnr', 'ssim']
