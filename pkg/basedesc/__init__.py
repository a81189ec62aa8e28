"""
Base descriptors: provider interface, gradient histograms, external dumps
"""

from .gradhist import gradhist_descriptor, gradhist_vector
from .provider import BaseDescriptorProvider, GradHistProvider, describe_image, build_provider
from .external import ExternalDescriptorProvider, load_external_descriptors

__all__ = ['gradhist_descriptor', 'gradhist_vector', 'BaseDescriptorProvider', 'GradHistProvider',
           'describe_image', 'build_provider', 'ExternalDescriptorProvider', 'load_external_descriptors']
