"""Synthetic fundus phantoms and on-disk dataset fixtures.

Real DRISHTI-GS and RIM-ONE trees cannot be redistributed, so tests and
demos fall back to generated look-alikes: a dark reddish field with a
bright elliptical disc and a paler concentric cup, plus soft or binary
ground-truth maps written in the exact directory layouts the loaders
document.  The phantoms are crude but structurally faithful -- the cup
sits inside the disc and both edges coincide with the image's intensity
edges, which is what the network has to learn.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .data import FundusSample, encode_mask

SOFT_EDGE = 1.5  # px of soft falloff around each structure boundary


def _distance_field(side: int, center: tuple[float, float]) -> np.ndarray:
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    return np.hypot(yy - center[0], xx - center[1])


def _soft_disk(dist: np.ndarray, radius: float) -> np.ndarray:
    # 0.5 exactly on the circle, so a >= 0.5 threshold recovers dist <= radius
    return np.clip((radius + SOFT_EDGE - dist) / (2 * SOFT_EDGE), 0.0, 1.0)


def make_phantom(
    side: int,
    center: tuple[float, float] | None = None,
    disc_radius: float | None = None,
    cup_ratio: float = 0.5,
    rng: np.random.Generator | None = None,
):
    """Fundus-like image plus soft disc/cup maps.

    Returns ``(image, disc_soft, cup_soft)`` where the image is uint8
    HxWx3 and the soft maps are float in [0, 1] with value 0.5 exactly on
    each structure boundary.
    """
    rng = rng or np.random.default_rng(0)
    if center is None:
        center = (side / 2.0, side / 2.0)
    if disc_radius is None:
        disc_radius = 0.22 * side

    dist = _distance_field(side, center)
    disc_soft = _soft_disk(dist, disc_radius)
    cup_soft = _soft_disk(dist, disc_radius * cup_ratio)

    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    glow = np.hypot(yy - side / 2, xx - side / 2) / side
    image = np.zeros((side, side, 3), dtype=np.float64)
    image[..., 0] = 95.0 - 55.0 * glow  # retinal background, red-dominant
    image[..., 1] = 42.0 - 22.0 * glow
    image[..., 2] = 22.0 - 10.0 * glow

    disc_tint = np.array([160.0, 130.0, 60.0])
    cup_tint = np.array([235.0, 210.0, 150.0])
    image += disc_soft[..., None] * disc_tint
    image += cup_soft[..., None] * (cup_tint - disc_tint) * 0.8

    image += rng.normal(0.0, 4.0, size=image.shape)
    return np.clip(image, 0, 255).astype(np.uint8), disc_soft, cup_soft


def phantom_sample(
    side: int,
    cup_ratio: float = 0.5,
    disc_radius: float | None = None,
    sample_id: str = "phantom",
    seed: int = 0,
) -> FundusSample:
    """A ready-to-train synthetic sample with encoded labels."""
    rng = np.random.default_rng(seed)
    image, disc_soft, cup_soft = make_phantom(
        side, disc_radius=disc_radius, cup_ratio=cup_ratio, rng=rng
    )
    labels = encode_mask(disc_soft, cup_soft)
    return FundusSample(sample_id, image, labels, source="synthetic")


def make_disk_labels(
    side: int,
    disc_radius: float,
    cup_ratio: float,
    center: tuple[float, float] | None = None,
) -> np.ndarray:
    """3-class label map of two concentric filled circles."""
    if center is None:
        center = (side / 2.0, side / 2.0)
    dist = _distance_field(side, center)
    labels = np.zeros((side, side), dtype=np.uint8)
    labels[dist <= disc_radius] = 1
    labels[dist <= disc_radius * cup_ratio] = 2
    return labels


def _save_gray(arr01: np.ndarray, path: str) -> None:
    Image.fromarray(np.round(arr01 * 255.0).astype(np.uint8), mode="L").save(path)


def write_drishti_tree(root, count: int = 101, side: int = 96, seed: int = 0) -> str:
    """Write a DRISHTI-layout fixture tree: images/ + gt/ soft maps."""
    root = str(root)
    os.makedirs(os.path.join(root, "images"), exist_ok=True)
    os.makedirs(os.path.join(root, "gt"), exist_ok=True)
    rng = np.random.default_rng(seed)
    for i in range(count):
        sid = f"drishti_{i + 1:03d}"
        center = (
            side / 2 + rng.uniform(-0.08, 0.08) * side,
            side / 2 + rng.uniform(-0.08, 0.08) * side,
        )
        radius = side * rng.uniform(0.18, 0.26)
        ratio = rng.uniform(0.35, 0.75)
        image, disc_soft, cup_soft = make_phantom(side, center, radius, ratio, rng)
        Image.fromarray(image).save(os.path.join(root, "images", f"{sid}.png"))
        _save_gray(disc_soft, os.path.join(root, "gt", f"{sid}_od_soft.png"))
        _save_gray(cup_soft, os.path.join(root, "gt", f"{sid}_cup_soft.png"))
    return root


def write_rimone_tree(
    root, glaucoma: int = 74, healthy: int = 85, side: int = 96, seed: int = 0
) -> str:
    """Write a RIM-ONE-layout fixture tree: diagnosis folders, binary masks.

    Glaucomatous phantoms get large cups (ratio 0.65-0.85), healthy ones
    small (0.30-0.50), mirroring what the screening threshold looks for.
    """
    root = str(root)
    rng = np.random.default_rng(seed)
    for diagnosis, count, lo, hi in (
        ("glaucoma", glaucoma, 0.65, 0.85),
        ("healthy", healthy, 0.30, 0.50),
    ):
        sub = os.path.join(root, diagnosis)
        os.makedirs(sub, exist_ok=True)
        for i in range(count):
            sid = f"rim_{diagnosis[0]}_{i + 1:03d}"
            center = (
                side / 2 + rng.uniform(-0.08, 0.08) * side,
                side / 2 + rng.uniform(-0.08, 0.08) * side,
            )
            radius = side * rng.uniform(0.18, 0.26)
            ratio = rng.uniform(lo, hi)
            image, disc_soft, cup_soft = make_phantom(side, center, radius, ratio, rng)
            Image.fromarray(image).save(os.path.join(sub, f"{sid}.png"))
            _save_gray((disc_soft >= 0.5).astype(np.float64), os.path.join(sub, f"{sid}_disc.png"))
            _save_gray((cup_soft >= 0.5).astype(np.float64), os.path.join(sub, f"{sid}_cup.png"))
    return root
