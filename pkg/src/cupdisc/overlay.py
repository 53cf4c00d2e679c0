"""Contour overlays and side-by-side result panels.

Rendering is intentionally simple: the disc and cup outlines are traced
directly on the fundus image in two fixed hues, and qualitative result
sheets put original, ground truth and prediction next to each other in
that order.
"""

from __future__ import annotations

import numpy as np
from PIL import Image
from scipy import ndimage

from .metrics import structure_mask

DISC_COLOR = (255, 215, 0)  # golden
CUP_COLOR = (0, 220, 255)  # cyan
GUTTER = 4


def mask_boundary(mask: np.ndarray) -> np.ndarray:
    """One-pixel-wide outline of a binary mask."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return np.zeros_like(mask)
    return mask & ~ndimage.binary_erosion(mask, border_value=0)


def draw_contours(image: np.ndarray, labels: np.ndarray, thickness: int = 1) -> np.ndarray:
    """Copy of ``image`` with disc and cup outlines drawn from ``labels``."""
    image = np.asarray(image, dtype=np.uint8)
    if image.shape[:2] != labels.shape:
        raise ValueError(f"image {image.shape[:2]} and labels {labels.shape} differ")
    out = image.copy()
    for structure, color in (("disc", DISC_COLOR), ("cup", CUP_COLOR)):
        edge = mask_boundary(structure_mask(labels, structure))
        if thickness > 1:
            edge = ndimage.binary_dilation(edge, iterations=thickness - 1)
        out[edge] = color
    return out


def three_panel(image: np.ndarray, true_labels: np.ndarray, pred_labels: np.ndarray) -> np.ndarray:
    """Original | ground truth | prediction, separated by white gutters."""
    panels = [
        np.asarray(image, dtype=np.uint8),
        draw_contours(image, true_labels),
        draw_contours(image, pred_labels),
    ]
    h = panels[0].shape[0]
    gutter = np.full((h, GUTTER, 3), 255, dtype=np.uint8)
    strip = [panels[0]]
    for p in panels[1:]:
        strip += [gutter, p]
    return np.concatenate(strip, axis=1)


def save_panel(panel: np.ndarray, path) -> None:
    Image.fromarray(panel).save(path)
