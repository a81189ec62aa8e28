"""
Tests for image I/O, Harris corners, patch extraction and synthetic pairs
"""

import struct
import sys
import zlib

import numpy as np
import pytest
from PIL import Image

from core.errors import UnsupportedImageError
from core.types import Keypoint, keypoints_to_array
from imaging.harris import gaussian_kernel, harris_corners, harris_response
from imaging.homography import project_points, similarity_homography, synth_pair, warp_image
from imaging.image_io import center_crop, load_image, save_image, to_grayscale
from imaging.patches import extract_patch, extract_patches
from imaging.synthetic import make_toy_corpus, make_toy_image


# ============================================================================
# HARRIS
# ============================================================================

def square_image(size=16, lo=4, hi=12):
    image = np.zeros((size, size))
    image[lo:hi, lo:hi] = 1.0
    return image


def test_constant_image_has_no_corners():
    assert harris_corners(np.full((32, 32), 0.5)) == []


def test_tiny_image_has_no_corners():
    assert harris_corners(np.ones((2, 2))) == []


def test_square_corners_found():
    keypoints = harris_corners(square_image(), nms_radius=2)
    corners = [(4, 4), (11, 4), (4, 11), (11, 11)]
    found = keypoints_to_array(keypoints[:4])[:, :2]
    for cx, cy in corners:
        assert np.min(np.max(np.abs(found - [cx, cy]), axis=1)) <= 1


def test_response_matches_explicit_sums():
    rng = np.random.default_rng(0)
    gray = rng.random((12, 12))
    response = harris_response(gray, k=0.04, sigma=1.0)

    padded = np.pad(gray, 1, mode='edge')
    ix = np.zeros_like(gray)
    iy = np.zeros_like(gray)
    sobel = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=float)
    for y in range(12):
        for x in range(12):
            window = padded[y:y + 3, x:x + 3]
            ix[y, x] = np.sum(window * sobel)
            iy[y, x] = np.sum(window * sobel.T)
    g = gaussian_kernel(1.0)
    r = g.shape[0] // 2
    products = [np.pad(p, r, mode='edge') for p in (ix * ix, iy * iy, ix * iy)]
    y, x = 6, 5
    sxx, syy, sxy = (np.sum(p[y:y + 2 * r + 1, x:x + 2 * r + 1] * g) for p in products)
    assert response[y, x] == pytest.approx(sxx * syy - sxy ** 2 - 0.04 * (sxx + syy) ** 2, rel=1e-9)


def test_checkerboard_budget():
    yy, xx = np.mgrid[0:256, 0:256]
    board = (((yy // 3) + (xx // 3)) % 2).astype(float)
    keypoints = harris_corners(board, max_count=1000, nms_radius=1)
    assert len(keypoints) == 1000
    scores = [kp.score for kp in keypoints]
    assert scores == sorted(scores, reverse=True)


def test_nms_radius_respected():
    image = make_toy_image(np.random.default_rng(3), size=64)
    keypoints = harris_corners(image, nms_radius=4)
    xy = keypoints_to_array(keypoints)[:, :2]
    for i in range(len(xy)):
        others = np.delete(xy, i, axis=0)
        if len(others):
            assert np.min(np.max(np.abs(others - xy[i]), axis=1)) > 4


def test_harris_translation_equivariance():
    base = np.zeros((48, 48))
    base[16:26, 14:30] = 1.0
    shifted = np.roll(np.roll(base, 3, axis=0), 5, axis=1)
    a = keypoints_to_array(harris_corners(base))[:, :2]
    b = keypoints_to_array(harris_corners(shifted))[:, :2]
    assert np.array_equal(a + [5, 3], b)


def test_max_count_validation():
    with pytest.raises(ValueError):
        harris_corners(square_image(), max_count=0)


# ============================================================================
# PATCHES
# ============================================================================

def test_center_patch_is_subwindow():
    image = np.arange(64 * 64, dtype=float).reshape(64, 64)
    patch = extract_patch(image, Keypoint(32, 32), 32)
    assert np.array_equal(patch, image[16:48, 16:48])


def test_corner_patch_replicates_border():
    rng = np.random.default_rng(1)
    image = rng.random((20, 20))
    patch = extract_patch(image, Keypoint(0, 0), 8)
    rows = np.clip(np.arange(8) - 4, 0, 19)
    expected = np.array([[image[r, c] for c in rows] for r in rows])
    assert np.array_equal(patch, expected)
    assert np.all(patch[:4, :4] == image[0, 0])


def test_full_size_patch_is_whole_image():
    image = np.random.default_rng(2).random((16, 16))
    assert np.array_equal(extract_patch(image, Keypoint(8, 8), 16), image)


def test_extract_patches_empty():
    assert extract_patches(np.zeros((8, 8)), [], 4).shape == (0, 4, 4)


# ============================================================================
# HOMOGRAPHY PAIRS
# ============================================================================

def test_identity_warp():
    image = make_toy_image(np.random.default_rng(4), size=32)
    H = similarity_homography(0.0, 1.0, 0.0, 0.0, (15.5, 15.5))
    assert np.array_equal(H, np.eye(3))
    assert np.allclose(warp_image(image, H), image)


def test_translation_warp():
    image = np.random.default_rng(5).random((24, 24))
    H = similarity_homography(0.0, 1.0, 5.0, 3.0, (11.5, 11.5))
    assert np.array_equal(H, [[1, 0, 5], [0, 1, 3], [0, 0, 1]])
    warped = warp_image(image, H)
    assert np.allclose(warped[3 + 4, 5 + 6], image[4, 6])


def test_synth_pair_consistency():
    rng = np.random.default_rng(6)
    image = make_toy_image(rng, size=64)
    warped, H = synth_pair(image, rng, max_rotation_deg=10.0, max_scale=1.1, max_translation_px=3.0)
    assert H[2, 2] == 1.0
    assert warped.shape == image.shape
    grid = np.stack(np.meshgrid(np.arange(8, 56, 4), np.arange(8, 56, 4)), axis=-1).reshape(-1, 2)
    back = project_points(np.linalg.inv(H), project_points(H, grid))
    assert np.mean(np.linalg.norm(back - grid, axis=1)) <= 0.5


def test_synth_pair_bounds():
    with pytest.raises(ValueError):
        synth_pair(np.zeros((8, 8)), np.random.default_rng(0), max_scale=0.9)


# ============================================================================
# I/O
# ============================================================================

def test_save_load_quantization(tmp_path):
    image = np.random.default_rng(7).random((10, 12, 3))
    path = save_image(image, str(tmp_path / 'a.png'))
    assert np.max(np.abs(load_image(path) - image)) <= 1.0 / 510 + 1e-12


def test_load_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_image(str(tmp_path / 'missing.png'))


def test_load_sixteen_bit(tmp_path):
    path = str(tmp_path / 'deep.png')
    Image.fromarray(np.full((4, 4), 40000, dtype=np.uint16)).save(path)
    with pytest.raises(UnsupportedImageError):
        load_image(path)


def write_png(path, pixels, bit_depth, colour_type):
    """Minimal PNG writer for bit depths Pillow cannot save"""
    def chunk(tag, data):
        return struct.pack('>I', len(data)) + tag + data + struct.pack('>I', zlib.crc32(tag + data) & 0xFFFFFFFF)

    height, width = pixels.shape[:2]
    raw = b''.join(b'\x00' + row.tobytes() for row in pixels)
    header = struct.pack('>IIBBBBB', width, height, bit_depth, colour_type, 0, 0, 0)
    with open(path, 'wb') as f:
        f.write(b'\x89PNG\r\n\x1a\n' + chunk(b'IHDR', header))
        f.write(chunk(b'IDAT', zlib.compress(raw)) + chunk(b'IEND', b''))
    return path


def test_load_sixteen_bit_rgb(tmp_path):
    pixels = np.full((8, 8, 3), 40000, dtype='>u2')
    path = write_png(str(tmp_path / 'deep_rgb.png'), pixels, bit_depth=16, colour_type=2)
    with pytest.raises(UnsupportedImageError):
        load_image(path)


def test_load_hand_written_eight_bit_rgb(tmp_path):
    pixels = np.arange(8 * 8 * 3, dtype=np.uint8).reshape(8, 8, 3)
    path = write_png(str(tmp_path / 'plain_rgb.png'), pixels, bit_depth=8, colour_type=2)
    assert np.allclose(load_image(path), pixels / 255.0)


def test_load_not_an_image(tmp_path):
    path = tmp_path / 'note.png'
    path.write_text("not an image")
    with pytest.raises(UnsupportedImageError):
        load_image(str(path))


def test_grayscale_and_crop():
    image = np.ones((10, 14, 3)) * [1.0, 0.0, 0.0]
    assert np.allclose(to_grayscale(image), 0.299)
    assert center_crop(image, 8, 8).shape == (8, 8, 3)
    with pytest.raises(ValueError):
        center_crop(image, 12, 8)


def test_toy_corpus_deterministic():
    a = make_toy_corpus(3, np.random.default_rng(9), size=32)
    b = make_toy_corpus(3, np.random.default_rng(9), size=32)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert all(x.min() >= 0.0 and x.max() <= 1.0 for x in a)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__]))
