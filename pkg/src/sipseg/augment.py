"""Seeded geometric augmentation applied jointly to image and labels.

Transforms compose as flip, rotate about center, scale about center,
translate.  Images resample bilinearly, label maps nearest-neighbour,
with exposed regions filled by 0 / class 0.  One input always yields one
output; augmentation never changes corpus size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import warp
from .imgcore import require_same_shape, validate_gray, validate_labels

ROTATION_RANGE = (-30.0, 30.0)
SCALE_RANGE = (1.2, 1.5)
TRANSLATE_RANGE = (-20.0, 20.0)


@dataclass(frozen=True)
class AugmentationParams:
    flip_x: bool = False
    flip_y: bool = False
    rotation_deg: float = 0.0
    scale: float = 1.0
    translate: tuple[float, float] = (0.0, 0.0)  # (dx, dy)

    def validate(self) -> None:
        if not ROTATION_RANGE[0] <= self.rotation_deg <= ROTATION_RANGE[1]:
            raise ValueError(f"rotation outside {ROTATION_RANGE}")
        if self.scale != 1.0 and not SCALE_RANGE[0] <= self.scale <= SCALE_RANGE[1]:
            raise ValueError(f"scale outside {SCALE_RANGE}")
        for d in self.translate:
            if not TRANSLATE_RANGE[0] <= d <= TRANSLATE_RANGE[1]:
                raise ValueError(f"translation outside {TRANSLATE_RANGE}")


def sample_augmentation(seed: int) -> AugmentationParams:
    """Draw one parameter set: Bernoulli(1/2) flips, uniform ranges."""
    rng = np.random.default_rng(seed)
    return AugmentationParams(
        flip_x=bool(rng.random() < 0.5),
        flip_y=bool(rng.random() < 0.5),
        rotation_deg=float(rng.uniform(*ROTATION_RANGE)),
        scale=float(rng.uniform(*SCALE_RANGE)),
        translate=(float(rng.uniform(*TRANSLATE_RANGE)), float(rng.uniform(*TRANSLATE_RANGE))),
    )


def _inverse_map(params: AugmentationParams, width: int, height: int) -> np.ndarray:
    # flip applied first, translate last; compose() applies rightmost first
    return warp.compose(
        warp.flip_matrix(width, height, params.flip_x, params.flip_y),
        warp.rotation_matrix(width, height, params.rotation_deg),
        warp.scale_matrix(width, height, params.scale),
        warp.translation_matrix(*params.translate),
    )


def apply_augmentation(
    img: np.ndarray, labels: np.ndarray, params: AugmentationParams
) -> tuple[np.ndarray, np.ndarray]:
    """Apply one geometric map to the image and its label map."""
    arr = validate_gray(img)
    lab = validate_labels(labels)
    require_same_shape(arr, lab)
    params.validate()
    h, w = arr.shape
    matrix = _inverse_map(params, w, h)
    return warp.warp_bilinear(arr, matrix, fill=0.0), warp.warp_nearest(lab, matrix, fill=0)
