"""
Loss terms: utility, reconstruction and the adversarial objectives
"""

from .objectives import phi_objective, theta_objective
from .perceptual import TapExtractor, build_perceptual_extractor, identity_extractor, random_extractor
from .reconstruction import mae_loss, perceptual_loss, recon_loss
from .utility import pairwise_distances, sos_regularizer, triplet_loss, utility_from_descriptors, utility_loss

__all__ = ['phi_objective', 'theta_objective',
           'TapExtractor', 'build_perceptual_extractor', 'identity_extractor', 'random_extractor',
           'mae_loss', 'perceptual_loss', 'recon_loss',
           'pairwise_distances', 'sos_regularizer', 'triplet_loss', 'utility_from_descriptors', 'utility_loss']
