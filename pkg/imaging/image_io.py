"""
Image file I/O (8-bit PNG) and color conversion
"""

import os

import numpy as np
from PIL import Image, UnidentifiedImageError

from core.errors import UnsupportedImageError

# ITU-R 601 luma weights
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

# 8-bit modes PIL can convert to RGB without losing precision
_EIGHT_BIT_MODES = {'RGB', 'RGBA', 'L', 'LA', 'P'}

PNG_SIGNATURE = b'\x89PNG\r\n\x1a\n'


def _bits_per_sample(img, path):
    """
    Bits per channel as stored in the file

    Pillow reports 16-bit RGB(A) PNGs with the 8-bit modes, so PNGs are
    read from the IHDR chunk and other formats from the raw decoder mode.
    """
    if img.format == 'PNG':
        with open(path, 'rb') as f:
            header = f.read(25)
        if len(header) == 25 and header.startswith(PNG_SIGNATURE) and header[12:16] == b'IHDR':
            return header[24]
    rawmodes = [tile[3] for tile in (img.tile or []) if isinstance(tile[3], str)]
    return 16 if any(';16' in mode for mode in rawmodes) else 8


def load_image(path):
    """
    Load an 8-bit image as float RGB in [0, 1]

    Parameters:
    -----------
    path : str
        Image file

    Returns:
    --------
    np.ndarray
        h x w x 3 float64 array

    Raises:
    -------
    FileNotFoundError
        If the path does not exist
    UnsupportedImageError
        If the file is not an image or not 8 bits per channel
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"image not found: {path}")
    try:
        with Image.open(path) as img:
            if img.mode not in _EIGHT_BIT_MODES:
                raise UnsupportedImageError(f"{path}: unsupported image mode {img.mode!r} (need 8-bit)")
            bits = _bits_per_sample(img, path)
            if bits > 8:
                raise UnsupportedImageError(f"{path}: {bits} bits per channel (need 8-bit)")
            rgb = np.asarray(img.convert('RGB'), dtype=np.float64)
    except UnidentifiedImageError as e:
        raise UnsupportedImageError(f"{path}: not a readable image") from e
    return rgb / 255.0


def save_image(image, path):
    """Save a [0,1] float image (h x w x 3 or h x w) as 8-bit PNG"""
    image = np.asarray(image, dtype=np.float64)
    data = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    Image.fromarray(data).save(path, format='PNG')
    return path


def to_grayscale(image):
    """ITU-R 601 luma of an RGB image; grayscale input is returned as float64"""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    return image @ LUMA_WEIGHTS


def crop_offsets(shape, height, width):
    """(top, left) of the central height x width window of an h x w image"""
    h, w = shape[:2]
    if height > h or width > w:
        raise ValueError(f"cannot crop {h}x{w} image to {height}x{width}")
    return (h - height) // 2, (w - width) // 2


def center_crop(image, height, width):
    """Central height x width window of an image"""
    top, left = crop_offsets(image.shape, height, width)
    return image[top:top + height, left:left + width]


def crop_to_multiple(image, multiple=32):
    """Center-crop both sides down to a multiple of `multiple`"""
    h, w = image.shape[:2]
    return center_crop(image, h - h % multiple, w - w % multiple)


def read_manifest(path):
    """Parse an `id<TAB>path` manifest into a list of (id, path)"""
    rows = []
    base = os.path.dirname(os.path.abspath(path))
    with open(path, 'r', encoding='utf-8') as f:
        for line in f:
            line = line.rstrip('\n')
            if not line:
                continue
            sample_id, sample_path = line.split('\t')[:2]
            if not os.path.isabs(sample_path):
                sample_path = os.path.join(base, sample_path)
            rows.append((sample_id, sample_path))
    return rows


def write_manifest(rows, path):
    """Write (id, path) rows as an `id<TAB>path` manifest"""
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        for sample_id, sample_path in rows:
            f.write(f"{sample_id}\t{sample_path}\n")
    return path
