"""The class-weighted dice loss, poked from several directions.

Shows the exact-match and complementary extremes, the closed-form value
for a uniform two-class prediction, how the inverse-square-area weights
rebalance tiny structures, and a finite-difference check of the analytic
gradient.
"""

import numpy as np
import torch

from cupdisc.loss import (
    class_weights,
    finite_difference_check,
    generalized_dice_loss,
    generalized_dice_loss_from_logits,
    one_hot_target,
)

rng = np.random.default_rng(0)

# Perfect prediction scores exactly zero, whatever the class layout.
labels = rng.integers(0, 3, size=(24, 24))
target = one_hot_target(labels, 3)[0]
print(f"loss on exact match:        {generalized_dice_loss(target.astype(float), target):.17g}")

# Predicting every pixel as the wrong class scores the maximum, 1.
two_class = one_hot_target((labels % 2), 2)[0]
complement = two_class[::-1].copy()  # swapping the two channels is everywhere-wrong
print(f"loss on complement:         {generalized_dice_loss(complement.astype(float), two_class):.17g}")

# A uniform 1/2-1/2 prediction over two classes lands on 1/3 exactly,
# independent of image size or class balance.
for h, w, n0 in ((32, 32, 512), (7, 57, 100)):
    flat = np.zeros(h * w, dtype=np.int64)
    flat[n0:] = 1
    t = one_hot_target(flat.reshape(h, w), 2)[0]
    value = generalized_dice_loss(np.full((2, h, w), 0.5), t)
    print(f"uniform 1/2 on {h}x{w}:       {value:.17g}  (1/3 = {1 / 3:.17g})")

# The weights are inverse squared class area: a 4-pixel cup counts as
# much as the background only if mistakes on it are 1000x cheaper.
labels = np.zeros((64, 64), dtype=np.int64)
labels[30:32, 30:32] = 2
labels[20:44, 20:44][labels[20:44, 20:44] == 0] = 1
t = one_hot_target(labels, 3)[0]
w = class_weights(t)
print("\nclass areas:  ", t.sum(axis=(1, 2)).astype(int))
print("class weights:", np.array2string(w, formatter={"float": lambda v: f"{v:.2e}"}))

# Gradients through softmax match central differences to float64 headroom.
logits = torch.tensor(rng.normal(size=(3, 16, 16)), requires_grad=True, dtype=torch.float64)
t16 = one_hot_target(torch.from_numpy(rng.integers(0, 3, size=(16, 16))), 3)[0]
err = finite_difference_check(logits, t16, rng=rng)
print(f"\nmax relative gradient error vs central differences: {err:.2e}")

# And one optimizer step actually reduces the loss.
opt = torch.optim.Adam([logits], lr=0.05)
before = generalized_dice_loss_from_logits(logits, t16)
before.backward()
opt.step()
after = generalized_dice_loss_from_logits(logits, t16)
print(f"one Adam step: {before.item():.6f} -> {after.item():.6f}")
