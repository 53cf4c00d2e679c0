"""Segmentation quality metrics and the cup-to-disc ratio.

All scores derive from the four confusion counts of a binary structure
mask (disc or cup) against its ground truth:

    dice                 2TP / (2TP + FP + FN)
    jaccard overlap      TP / (TP + FP + FN)
    overlap error        1 - jaccard
    sensitivity          TP / (TP + FN)
    specificity          TN / (TN + FP)
    balanced accuracy    (sensitivity + specificity) / 2

Empty denominators use the agreement convention: a ratio whose denominator
is zero scores 1.0 when the prediction also shows nothing of the missing
kind (no disagreement is possible) and 0.0 otherwise.  Concretely, dice,
jaccard and sensitivity with an all-empty denominator score 1.0 iff there
are no false positives; specificity with no true negatives scores 1.0 iff
there are no false negatives.  Overlap error is always 1 - jaccard.

Label maps use three classes: 0 background, 1 disc rim (disc excluding
cup), 2 cup.  The disc structure is the union of classes 1 and 2; the cup
is class 2 alone, so cup-inside-disc holds by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LABEL_BACKGROUND = 0
LABEL_RIM = 1
LABEL_CUP = 2
STRUCTURES = ("disc", "cup")

CDR_SCREEN_THRESHOLD = 0.6
METRIC_NAMES = ("dice", "jaccard", "overlap_error", "sensitivity", "specificity", "balanced_accuracy")


def structure_mask(labels: np.ndarray, structure: str) -> np.ndarray:
    """Binary mask of one anatomical structure from a 3-class label map."""
    labels = np.asarray(labels)
    if structure == "disc":
        return (labels == LABEL_RIM) | (labels == LABEL_CUP)
    if structure == "cup":
        return labels == LABEL_CUP
    raise ValueError(f"unknown structure {structure!r}; expected one of {STRUCTURES}")


def confusion(pred: np.ndarray, truth: np.ndarray) -> tuple[int, int, int, int]:
    """(TP, FP, FN, TN) of two binary masks of equal shape."""
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs truth {truth.shape}")
    tp = int(np.count_nonzero(pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    fn = int(np.count_nonzero(~pred & truth))
    tn = pred.size - tp - fp - fn
    return tp, fp, fn, tn


def _ratio(num: int, den: int, agree: bool) -> float:
    if den == 0:
        return 1.0 if agree else 0.0
    return num / den


def compute_metrics(pred: np.ndarray, truth: np.ndarray) -> dict[str, float]:
    """All six scores for one binary mask pair, as a name -> value dict."""
    tp, fp, fn, tn = confusion(pred, truth)
    jaccard = _ratio(tp, tp + fp + fn, agree=fp == 0)
    sens = _ratio(tp, tp + fn, agree=fp == 0)
    spec = _ratio(tn, tn + fp, agree=fn == 0)
    return {
        "dice": _ratio(2 * tp, 2 * tp + fp + fn, agree=fp == 0),
        "jaccard": jaccard,
        "overlap_error": 1.0 - jaccard,
        "sensitivity": sens,
        "specificity": spec,
        "balanced_accuracy": 0.5 * (sens + spec),
    }


def evaluate_pair(pred_labels: np.ndarray, true_labels: np.ndarray) -> dict[str, dict[str, float]]:
    """Scores for both structures of a predicted/true 3-class label pair.

    Returns ``{"disc": {...six scores...}, "cup": {...}}``.
    """
    pred_labels = np.asarray(pred_labels)
    true_labels = np.asarray(true_labels)
    if pred_labels.shape != true_labels.shape:
        raise ValueError(
            f"shape mismatch: pred {pred_labels.shape} vs truth {true_labels.shape}"
        )
    return {
        s: compute_metrics(structure_mask(pred_labels, s), structure_mask(true_labels, s))
        for s in STRUCTURES
    }


def aggregate(per_image: list[dict[str, dict[str, float]]]) -> dict[str, dict[str, float]]:
    """Unweighted mean of per-image scores, structure by structure."""
    if not per_image:
        raise ValueError("nothing to aggregate")
    out: dict[str, dict[str, float]] = {}
    for s in STRUCTURES:
        out[s] = {
            m: float(np.mean([row[s][m] for row in per_image])) for m in METRIC_NAMES
        }
    return out


# --------------------------------------------------------------------------
# cup-to-disc ratio

def vertical_diameter(mask: np.ndarray) -> int:
    """Greatest vertical extent of a binary mask, in pixels.

    For each column containing foreground, the extent is last row - first
    row + 1; the diameter is the maximum over columns, 0 for an empty mask.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-D, got shape {mask.shape}")
    cols = mask.any(axis=0)
    if not cols.any():
        return 0
    first = mask.argmax(axis=0)
    last = mask.shape[0] - 1 - mask[::-1].argmax(axis=0)
    extents = (last - first + 1)[cols]
    return int(extents.max())


@dataclass(frozen=True)
class CdrResult:
    """Vertical cup-to-disc ratio and the screening decision it implies."""

    cup_diameter: int
    disc_diameter: int
    cdr: float | None
    screen_positive: bool | None

    @property
    def has_disc(self) -> bool:
        return self.disc_diameter > 0


def compute_cdr(labels: np.ndarray, threshold: float = CDR_SCREEN_THRESHOLD) -> CdrResult:
    """Vertical cup-to-disc ratio of a 3-class label map.

    ``screen_positive`` is True when the ratio strictly exceeds the
    threshold.  A map with no disc pixels yields ``cdr=None`` and
    ``screen_positive=None``: no measurement exists, which callers must
    treat explicitly rather than as a healthy reading.
    """
    disc = vertical_diameter(structure_mask(labels, "disc"))
    cup = vertical_diameter(structure_mask(labels, "cup"))
    if disc == 0:
        return CdrResult(cup_diameter=cup, disc_diameter=0, cdr=None, screen_positive=None)
    cdr = cup / disc
    return CdrResult(cup, disc, cdr, cdr > threshold)
