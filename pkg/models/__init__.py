"""
Networks: the NinjaNet encoder and the UNet / UResNet inversion models
"""

from .feature_map import SparseFeatureMap, compose_feature_map, scatter_plan, scatter_tensor
from .inversion import UNet, UResNet, build_inversion_net, inversion_forward, inversion_backward
from .ninjanet import NinjaNet, build_ninjanet, ninjanet_forward, ninjanet_backward, encode_descriptors

__all__ = ['SparseFeatureMap', 'compose_feature_map', 'scatter_plan', 'scatter_tensor',
           'UNet', 'UResNet', 'build_inversion_net', 'inversion_forward', 'inversion_backward',
           'NinjaNet', 'build_ninjanet', 'ninjanet_forward', 'ninjanet_backward', 'encode_descriptors']
