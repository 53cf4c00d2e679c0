"""Scoring a segmentation and screening by cup-to-disc ratio.

Builds a ground-truth pair of concentric circles, perturbs a copy into a
plausible "prediction", prints all six scores for both structures, and
then sweeps the cup size to show where the 0.6 screening threshold trips.
"""

import numpy as np

from cupdisc.metrics import (
    CDR_SCREEN_THRESHOLD,
    METRIC_NAMES,
    compute_cdr,
    evaluate_pair,
    vertical_diameter,
    structure_mask,
)
from cupdisc.synthetic import make_disk_labels

truth = make_disk_labels(128, 40.0, 0.55)
pred = make_disk_labels(128, 42.0, 0.50, center=(66.0, 63.0))  # slightly off and too big

scores = evaluate_pair(pred, truth)
print(f"{'metric':<20}{'disc':>10}{'cup':>10}")
for name in METRIC_NAMES:
    print(f"{name:<20}{scores['disc'][name]:>10.4f}{scores['cup'][name]:>10.4f}")

# The six are not independent: three identities tie them together.
d = scores["disc"]
print("\nidentities on the disc row:")
print(f"  1 - JC            = {1 - d['jaccard']:.10f}  vs E  {d['overlap_error']:.10f}")
print(f"  2JC / (1 + JC)    = {2 * d['jaccard'] / (1 + d['jaccard']):.10f}  vs DC {d['dice']:.10f}")
print(f"  (Sen + Sp) / 2    = {(d['sensitivity'] + d['specificity']) / 2:.10f}  vs BA {d['balanced_accuracy']:.10f}")

# Vertical diameters drive the ratio: glaucoma enlarges the cup while the
# disc stays put, so the ratio creeps toward 1.
print(f"\ntruth disc diameter: {vertical_diameter(structure_mask(truth, 'disc'))} px")
print(f"truth cup  diameter: {vertical_diameter(structure_mask(truth, 'cup'))} px")

print(f"\ncup sweep (screen threshold {CDR_SCREEN_THRESHOLD}):")
for ratio in (0.30, 0.45, 0.60, 0.62, 0.75, 0.90):
    result = compute_cdr(make_disk_labels(128, 40.0, ratio))
    flag = "POSITIVE" if result.screen_positive else "negative"
    print(f"  drawn ratio {ratio:.2f} -> measured cdr {result.cdr:.3f}  screen {flag}")

empty = compute_cdr(np.zeros((64, 64), dtype=np.uint8))
print(f"\nno disc found -> cdr {empty.cdr}, screen_positive {empty.screen_positive}")
