"""
Dice and Hausdorff on a synthetic vessel
========================================

A threshold "segmenter" is run on a noisy copy of the phantom and compared
against its ground truth.
"""

import numpy as np

from segaeval.augment import augment_case, sample_params
from segaeval.metrics import evaluate_pair
from segaeval.synthetic import vessel_phantom
from segaeval.volume import LabelMask

image, mask = vessel_phantom()
# intensities normalised to [0, 1], plus the strongest allowed noise
case = augment_case(image, mask, sample_params([0.5, 0.0, 0.5, 1.0], noise_seed=3))
truth = case.mask
print("grid", truth.dims, "spacing", truth.spacing)

for t in (0.28, 0.30, 0.32):
    pred = LabelMask.like(truth, case.image.values > t)
    r = evaluate_pair(pred, truth)
    print(f"threshold {t:.2f}  DSC {r.dsc:.4f}  HD {r.hd_mm:6.2f} mm  "
          f"V_pred {r.volume_ml_pred:.3f} ml")

# an empty prediction is penalised with the grid diagonal and flagged
empty = LabelMask.like(truth, np.zeros(truth.dims, bool))
print(evaluate_pair(empty, truth).as_dict())
