"""Reflection removal: local-mean thresholding, dilation, hole filling,
ocular hole patching, and non-local means for the periocular skin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .imgcore import validate_gray

# slope of the sensitivity-to-threshold mapping; s=0.5 leaves the plain
# local mean as the threshold and the mapping is monotone in s
SENSITIVITY_SLOPE = 0.6


@dataclass(frozen=True)
class AdaptiveThresholdConfig:
    sensitivity: float = 0.0
    polarity: str = "bright"  # or "dark"
    window: int | None = None  # odd; default: largest odd <= min(H,W)/8, at least 3
    slope: float = SENSITIVITY_SLOPE

    def validate(self) -> None:
        if not 0.0 <= self.sensitivity <= 1.0:
            raise ValueError("sensitivity must lie in [0, 1]")
        if self.polarity not in ("bright", "dark"):
            raise ValueError(f"polarity must be 'bright' or 'dark', got {self.polarity!r}")
        if self.window is not None and (self.window < 3 or self.window % 2 == 0):
            raise ValueError("window must be odd and >= 3")


@dataclass(frozen=True)
class NlmConfig:
    smoothing: float = 7.0 / 255.0  # weight-decay scale on the [0,1] intensity range
    search: int = 25
    comparison: int = 17
    noise_variance: float = 0.0  # known noise variance subtracted from patch distances

    def validate(self) -> None:
        if self.smoothing <= 0.0:
            raise ValueError("smoothing must be positive")
        if self.search % 2 == 0 or self.comparison % 2 == 0:
            raise ValueError("search and comparison windows must be odd")
        if self.comparison > self.search:
            raise ValueError("comparison window must not exceed the search window")
        if self.noise_variance < 0.0:
            raise ValueError("noise_variance must be non-negative")


def default_window(height: int, width: int) -> int:
    """Largest odd window not exceeding min(H, W)/8, floored at 3."""
    w = int(min(height, width) // 8)
    if w % 2 == 0:
        w -= 1
    return max(w, 3)


def local_mean(img: np.ndarray, window: int) -> np.ndarray:
    """Windowed mean with edge replication, via an integral image.

    The image is anchored at its first pixel before summing so that a
    constant image yields its own value exactly at every position.
    """
    rad = window // 2
    anchor = img[0, 0]
    padded = np.pad(img - anchor, rad, mode="edge")
    cs = padded.cumsum(axis=0).cumsum(axis=1)
    cs = np.pad(cs, ((1, 0), (1, 0)))
    k = window
    total = cs[k:, k:] - cs[:-k, k:] - cs[k:, :-k] + cs[:-k, :-k]
    return anchor + total / float(k * k)


def adaptive_threshold(img: np.ndarray, cfg: AdaptiveThresholdConfig = AdaptiveThresholdConfig()) -> np.ndarray:
    """Per-pixel binarization against a scaled local mean.

    bright: keep p > mean * (1 + slope*(0.5 - s));
    dark:   keep p < mean * (1 - slope*(0.5 - s)).
    """
    arr = validate_gray(img)
    cfg.validate()
    window = cfg.window if cfg.window is not None else default_window(*arr.shape)
    mean = local_mean(arr, window)
    factor = cfg.slope * (0.5 - cfg.sensitivity)
    if cfg.polarity == "bright":
        return arr > mean * (1.0 + factor)
    return arr < mean * (1.0 - factor)


def disk_offsets(radius: int) -> np.ndarray:
    """Integer offsets (dy, dx) with dy^2 + dx^2 <= radius^2."""
    r = int(radius)
    ys, xs = np.mgrid[-r : r + 1, -r : r + 1]
    keep = ys**2 + xs**2 <= r * r
    return np.stack([ys[keep], xs[keep]], axis=1)


def dilate_disk(mask: np.ndarray, radius: int) -> np.ndarray:
    """Union of Euclidean disks centered at every foreground pixel."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    m = np.asarray(mask, dtype=bool)
    if radius == 0:
        return m.copy()
    r = int(radius)
    padded = np.pad(m, r)
    out = np.zeros_like(m)
    for dy, dx in disk_offsets(r):
        out |= padded[r + dy : r + dy + m.shape[0], r + dx : r + dx + m.shape[1]]
    return out


def fill_holes(img: np.ndarray) -> np.ndarray:
    """Grayscale hole filling; enclosed minima rise to their pour level."""
    return kernels.fill_holes(validate_gray(img))


def fill_bright_holes(img: np.ndarray) -> np.ndarray:
    """Dual filling: enclosed maxima sink to their surrounding level.

    Specular reflections are bright islands, so patching them needs the
    complement of minima-filling; plain fill_holes never darkens.
    """
    return 1.0 - kernels.fill_holes(1.0 - validate_gray(img))


def remove_ocular_reflections(
    enhanced: np.ndarray,
    sensitivity: float = 0.0,
    dilate_radius: int = 2,
    window: int | None = None,
) -> np.ndarray:
    """Patch bright specular holes with their hole-filled values.

    Bright-polarity thresholding finds the specular spots, the mask is
    grown by a radius-2 disk, and only those pixels are replaced by the
    bright-hole fill.
    """
    arr = validate_gray(enhanced)
    mask = adaptive_threshold(arr, AdaptiveThresholdConfig(sensitivity=sensitivity, polarity="bright", window=window))
    mask = dilate_disk(mask, dilate_radius)
    filled = fill_bright_holes(arr)
    return np.where(mask, filled, arr)


def nlm_filter(img: np.ndarray, cfg: NlmConfig = NlmConfig()) -> np.ndarray:
    """Non-local means: pixels averaged by patch-similarity weights.

    Weight for displacement q is exp(-max(d2 - 2*noise_variance, 0)/h^2)
    with d2 the mean squared difference of the comparison patches.  The
    output is a convex combination of input values, clamped to the input
    range to keep that invariant exact under rounding.
    """
    arr = validate_gray(img)
    cfg.validate()
    out = kernels.nlm(arr, cfg.smoothing, cfg.search, cfg.comparison, cfg.noise_variance)
    return np.clip(out, arr.min(), arr.max())
