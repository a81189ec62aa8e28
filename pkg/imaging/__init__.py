"""
Image I/O, Harris detection, patches and synthetic homography pairs
"""

from .harris import harris_corners, harris_response, detect_keypoints
from .homography import synth_pair, similarity_homography, project_points, warp_image
from .image_io import load_image, save_image, to_grayscale, center_crop, crop_offsets, crop_to_multiple
from .patches import extract_patch, extract_patches

__all__ = ['harris_corners', 'harris_response', 'detect_keypoints',
           'synth_pair', 'similarity_homography', 'project_points', 'warp_image',
           'load_image', 'save_image', 'to_grayscale', 'center_crop', 'crop_offsets', 'crop_to_multiple',
           'extract_patch', 'extract_patches']
