"""Naive reference implementations used as test oracles.

Everything here is written as plain per-pixel loops with no vectorization
and no shared code with the package, so disagreements point at the
package, not at the oracle.
"""

from fractions import Fraction

import numpy as np


def naive_confusion(pred, truth):
    tp = fp = fn = tn = 0
    for i in range(pred.shape[0]):
        for j in range(pred.shape[1]):
            p, t = bool(pred[i, j]), bool(truth[i, j])
            if p and t:
                tp += 1
            elif p and not t:
                fp += 1
            elif not p and t:
                fn += 1
            else:
                tn += 1
    return tp, fp, fn, tn


def naive_metrics(pred, truth):
    tp, fp, fn, tn = naive_confusion(pred, truth)

    def ratio(num, den, agree):
        if den == 0:
            return 1.0 if agree else 0.0
        return num / den

    jac = ratio(tp, tp + fp + fn, fp == 0)
    sen = ratio(tp, tp + fn, fp == 0)
    sp = ratio(tn, tn + fp, fn == 0)
    return {
        "dice": ratio(2 * tp, 2 * tp + fp + fn, fp == 0),
        "jaccard": jac,
        "overlap_error": 1.0 - jac,
        "sensitivity": sen,
        "specificity": sp,
        "balanced_accuracy": 0.5 * (sen + sp),
    }


def exact_dice_identity_holds(tp, fp, fn):
    """DC = 2O/(1+O) in exact rational arithmetic."""
    if tp + fp + fn == 0:
        return True  # identity undefined; convention covers the value
    o = Fraction(tp, tp + fp + fn)
    return Fraction(2 * tp, 2 * tp + fp + fn) == 2 * o / (1 + o)


def naive_vertical_diameter(mask):
    best = 0
    for col in range(mask.shape[1]):
        rows = [r for r in range(mask.shape[0]) if mask[r, col]]
        if rows:
            best = max(best, rows[-1] - rows[0] + 1)
    return best


def naive_gdl(probs, target):
    """Scalar-loop generalized dice loss for one (C, H, W) pair."""
    n_classes, h, w = probs.shape
    weights = []
    for c in range(n_classes):
        area = 0.0
        for i in range(h):
            for j in range(w):
                area += float(target[c, i, j])
        weights.append(0.0 if area == 0 else 1.0 / (area * area))
    num = 0.0
    den = 0.0
    for c in range(n_classes):
        intersect = 0.0
        area = 0.0
        for i in range(h):
            for j in range(w):
                intersect += float(probs[c, i, j]) * float(target[c, i, j])
                area += float(target[c, i, j])
        num += weights[c] * intersect
        den += weights[c] * (intersect + area)
    if den == 0.0:
        return 0.0
    return 1.0 - 2.0 * num / den


def random_label_pair(rng, side=16, num_classes=3):
    """A pair of random label maps with occasional degenerate structure."""
    def one():
        style = rng.integers(0, 4)
        if style == 0:
            return np.zeros((side, side), dtype=np.uint8)  # all background
        if style == 1:
            return np.full((side, side), rng.integers(1, num_classes), dtype=np.uint8)
        lab = rng.integers(0, num_classes, size=(side, side)).astype(np.uint8)
        if style == 3:
            lab[lab == 1] = 2  # no rim
        return lab

    return one(), one()


def naive_conv_param_count(in_channels, out_channels, kernel, groups=1):
    """Count parameters by enumerating every scalar weight."""
    count = 0
    per_group_in = in_channels // groups
    for _ in range(out_channels):
        for _ in range(per_group_in):
            for _ in range(kernel):
                for _ in range(kernel):
                    count += 1
        count += 1  # bias
    return count
