"""
PNG contact sheets: one row per image, one column per reconstruction source
"""

import os

import numpy as np
from PIL import Image, ImageDraw

LABEL_HEIGHT = 14
GAP = 2


def _to_uint8(image):
    return np.round(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def make_contact_sheet(columns, labels=None):
    """
    Tile images into a labelled grid

    Parameters:
    -----------
    columns : list of list of np.ndarray
        columns[c][r] is the h x w x 3 image of row r in column c
        (e.g. original | raw attack | attack at each lambda)
    labels : list of str or None
        Column headers

    Returns:
    --------
    PIL.Image.Image
    """
    if not columns or not columns[0]:
        raise ValueError("contact sheet needs at least one image")
    rows = len(columns[0])
    if any(len(c) != rows for c in columns):
        raise ValueError("every column needs the same number of images")
    h, w = np.asarray(columns[0][0]).shape[:2]
    header = LABEL_HEIGHT if labels else 0
    sheet = Image.new('RGB', (len(columns) * (w + GAP) + GAP, header + rows * (h + GAP) + GAP), 'white')
    draw = ImageDraw.Draw(sheet)
    for c, column in enumerate(columns):
        x = GAP + c * (w + GAP)
        if labels:
            draw.text((x, 1), str(labels[c]), fill='black')
        for r, image in enumerate(column):
            sheet.paste(Image.fromarray(_to_uint8(image)), (x, header + GAP + r * (h + GAP)))
    return sheet


def save_contact_sheet(columns, path, labels=None):
    os.makedirs(os.path.dirname(path) or '.', exist_ok=True)
    make_contact_sheet(columns, labels).save(path, format='PNG')
    return path
