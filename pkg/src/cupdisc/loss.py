"""Generalized dice loss for multi-class segmentation.

Class imbalance in fundus segmentation is severe: background dominates,
the cup is a small fraction of the disc.  Plain per-pixel losses let the
background swamp the gradient, so the training objective weights each
class by the inverse square of its ground-truth area,

    w_c = 1 / (sum_i g_ci)^2,

and scores the overlap as

    L = 1 - 2 * (sum_c w_c sum_i p_ci g_ci)
            / (sum_c w_c (sum_i p_ci g_ci + sum_i g_ci)).

With per-pixel probabilities that sum to one, L is 0 exactly when the
prediction places full mass on the true class everywhere, 1 when the true
classes receive no mass at all, and 1/3 for a uniform prediction over two
present classes regardless of their sizes.  Classes absent from the
ground truth get w_c = 0 and drop out.  The empty ratio 0/0 (no foreground
mass anywhere after weighting) is defined as a perfect score, keeping the
loss finite without an additive smoothing term that would bias small
structures.

Both numpy arrays and torch tensors are accepted; torch input returns a
differentiable scalar tensor, numpy input returns a float.
"""

from __future__ import annotations

import numpy as np
import torch

PROB_ATOL = 1e-4


def one_hot_target(labels, num_classes: int):
    """Integer label map (B, H, W) or (H, W) -> one-hot (B, C, H, W).

    Accepts numpy or torch input and returns the matching kind; values must
    lie in [0, num_classes).
    """
    if isinstance(labels, torch.Tensor):
        if labels.ndim == 2:
            labels = labels.unsqueeze(0)
        if labels.ndim != 3:
            raise ValueError(f"labels must be (B, H, W) or (H, W), got {tuple(labels.shape)}")
        lo, hi = int(labels.min()), int(labels.max())
        if lo < 0 or hi >= num_classes:
            raise ValueError(f"labels span [{lo}, {hi}], outside [0, {num_classes})")
        onehot = torch.nn.functional.one_hot(labels.long(), num_classes)
        return onehot.permute(0, 3, 1, 2).to(torch.float32)

    labels = np.asarray(labels)
    if labels.ndim == 2:
        labels = labels[None]
    if labels.ndim != 3:
        raise ValueError(f"labels must be (B, H, W) or (H, W), got {labels.shape}")
    lo, hi = int(labels.min()), int(labels.max())
    if lo < 0 or hi >= num_classes:
        raise ValueError(f"labels span [{lo}, {hi}], outside [0, {num_classes})")
    onehot = np.zeros((labels.shape[0], num_classes) + labels.shape[1:], dtype=np.float64)
    for c in range(num_classes):
        onehot[:, c] = labels == c
    return onehot


def class_weights(target):
    """Inverse-square-area weights per class for one image.

    ``target`` is one-hot (C, H, W); returns an array/tensor of C weights,
    zero for classes with no ground-truth pixels.
    """
    if isinstance(target, torch.Tensor):
        area = target.sum(dim=(1, 2))
        w = torch.zeros_like(area)
        present = area > 0
        w[present] = 1.0 / area[present] ** 2
        return w
    area = np.asarray(target).sum(axis=(1, 2))
    w = np.zeros_like(area, dtype=np.float64)
    present = area > 0
    w[present] = 1.0 / area[present] ** 2
    return w


def _check_pair(probs, target):
    if probs.shape != target.shape:
        raise ValueError(f"probs shape {tuple(probs.shape)} != target shape {tuple(target.shape)}")
    if probs.ndim == 3:
        return True
    if probs.ndim == 4:
        return False
    raise ValueError(f"expected (C, H, W) or (B, C, H, W), got {tuple(probs.shape)}")


def _single_image_loss_torch(probs: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    w = class_weights(target).detach()
    intersect = (probs * target).sum(dim=(1, 2))
    area = target.sum(dim=(1, 2))
    num = 2.0 * (w * intersect).sum()
    den = (w * (intersect + area)).sum()
    if den == 0:
        return probs.sum() * 0.0
    return 1.0 - num / den


def _single_image_loss_numpy(probs: np.ndarray, target: np.ndarray) -> float:
    w = class_weights(target)
    intersect = (probs * target).sum(axis=(1, 2))
    area = target.sum(axis=(1, 2))
    num = 2.0 * float((w * intersect).sum())
    den = float((w * (intersect + area)).sum())
    if den == 0.0:
        return 0.0
    return 1.0 - num / den


def generalized_dice_loss(probs, target, check_inputs: bool = True):
    """Area-weighted dice loss between probabilities and one-hot targets.

    ``probs``: per-pixel class probabilities, (C, H, W) or (B, C, H, W).
    ``target``: one-hot ground truth of the same shape (0/1 values).
    A batch scores as the mean of per-image losses, each image using its
    own class weights.

    With ``check_inputs`` (the default) the channel sums of ``probs`` must
    be within ``PROB_ATOL`` of one at every pixel, and ``target`` must be
    exactly one-hot; violations raise ``ValueError``.
    """
    is_torch = isinstance(probs, torch.Tensor)
    if is_torch != isinstance(target, torch.Tensor):
        raise ValueError("probs and target must both be numpy or both torch")
    if not is_torch:
        probs = np.asarray(probs, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
    single = _check_pair(probs, target)

    if check_inputs:
        sums = probs.sum(axis=0 if single else 1) if not is_torch else probs.sum(dim=0 if single else 1)
        if is_torch:
            bad = (sums - 1.0).abs().max().item()
        else:
            bad = float(np.abs(sums - 1.0).max())
        if bad > PROB_ATOL:
            raise ValueError(f"probs do not sum to 1 per pixel (max deviation {bad:.3g})")
        if is_torch:
            onehot_ok = bool(((target == 0) | (target == 1)).all()) and bool(
                (target.sum(dim=0 if single else 1) == 1).all()
            )
        else:
            onehot_ok = bool(np.isin(target, (0.0, 1.0)).all()) and bool(
                (target.sum(axis=0 if single else 1) == 1).all()
            )
        if not onehot_ok:
            raise ValueError("target is not one-hot")

    if single:
        probs = probs[None] if not is_torch else probs.unsqueeze(0)
        target = target[None] if not is_torch else target.unsqueeze(0)

    if is_torch:
        losses = [_single_image_loss_torch(probs[b], target[b]) for b in range(probs.shape[0])]
        return torch.stack(losses).mean()
    return float(np.mean([_single_image_loss_numpy(probs[b], target[b]) for b in range(probs.shape[0])]))


def generalized_dice_loss_from_logits(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Softmax over the channel axis, then the dice loss.

    The softmax guarantees per-pixel normalization, so the input check is
    skipped; this is the training-loop entry point.
    """
    if not isinstance(logits, torch.Tensor):
        raise TypeError("logits must be a torch tensor")
    probs = torch.softmax(logits, dim=0 if logits.ndim == 3 else 1)
    return generalized_dice_loss(probs, target, check_inputs=False)


def finite_difference_check(
    logits: torch.Tensor,
    target: torch.Tensor,
    eps: float = 1e-5,
    samples: int = 25,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients
    of the logit-space dice loss.

    Checks ``samples`` randomly chosen logit coordinates (all of them when
    the tensor is small).  Inputs must be at most 16x16 spatially and
    ``eps`` in (0, 1e-3]; everything runs in float64 for headroom.
    Relative error uses max(|analytic|, |numeric|, 1e-8) in the denominator.
    """
    if not 0 < eps <= 1e-3:
        raise ValueError(f"eps must be in (0, 1e-3], got {eps}")
    if logits.shape[-1] > 16 or logits.shape[-2] > 16:
        raise ValueError("finite differences are only sized for <= 16x16 inputs")
    rng = rng or np.random.default_rng(0)

    logits = logits.detach().to(torch.float64).requires_grad_(True)
    target64 = target.to(torch.float64)
    loss = generalized_dice_loss_from_logits(logits, target64)
    loss.backward()
    analytic = logits.grad.clone()

    flat = logits.detach().reshape(-1)
    n = flat.numel()
    picks = range(n) if n <= samples else sorted(rng.choice(n, size=samples, replace=False))

    worst = 0.0
    for i in picks:
        for sign, store in ((1.0, "hi"), (-1.0, "lo")):
            bumped = flat.clone()
            bumped[i] += sign * eps
            with torch.no_grad():
                val = generalized_dice_loss_from_logits(
                    bumped.reshape(logits.shape), target64
                ).item()
            if store == "hi":
                hi = val
            else:
                lo = val
        numeric = (hi - lo) / (2 * eps)
        ga = analytic.reshape(-1)[i].item()
        rel = abs(ga - numeric) / max(abs(ga), abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst
