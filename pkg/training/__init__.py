"""
Training stages: utility init of Theta, reconstruction init of Phi, joint minimax loop
"""

from .datasets import ExperimentData, ImageSet, PatchDataset, feature_maps, load_experiment_data
from .joint import JointTrainer, joint_train_step, train_joint
from .recon_init import fit_inversion, overfit_single_image, train_recon_init
from .utility_init import train_utility_init, utility_step

__all__ = ['ExperimentData', 'ImageSet', 'PatchDataset', 'feature_maps', 'load_experiment_data',
           'JointTrainer', 'joint_train_step', 'train_joint',
           'fit_inversion', 'overfit_single_image', 'train_recon_init',
           'train_utility_init', 'utility_step']
