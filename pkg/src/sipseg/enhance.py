"""Intensity transforms and histogram-based enhancement.

All operations map [0, 1] into [0, 1] and share a fixed 256-bin histogram
resolution, matching 8-bit source data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateImageError
from .imgcore import validate_gray

NBINS = 256


@dataclass(frozen=True)
class StretchLimits:
    low_in: float
    high_in: float
    low_out: float = 0.0
    high_out: float = 1.0

    def validate(self) -> None:
        if not self.low_in < self.high_in:
            raise DegenerateImageError("degenerate stretch limits: low_in >= high_in")
        if not self.low_out < self.high_out:
            raise ValueError("low_out must be < high_out")


@dataclass(frozen=True)
class ClaheConfig:
    tile: int = 20  # tile side length in pixels
    clip: float = 0.005  # clip limit as a fraction of the tile pixel count

    def validate(self) -> None:
        if self.tile < 2:
            raise ValueError("tile size must be >= 2 pixels")
        if not 0.0 < self.clip <= 1.0:
            raise ValueError("clip limit must lie in (0, 1]")


def stretch_limits(img: np.ndarray, tail: float = 0.01) -> StretchLimits:
    """Input limits at the tail quantiles; output limits fixed to [0, 1].

    Raises DegenerateImageError on a constant image, in which case callers
    fall back to the identity map.
    """
    arr = validate_gray(img)
    if not 0.0 <= tail < 0.5:
        raise ValueError("tail must lie in [0, 0.5)")
    low = float(np.quantile(arr, tail))
    high = float(np.quantile(arr, 1.0 - tail))
    if not low < high:
        raise DegenerateImageError("constant image has no stretch limits")
    return StretchLimits(low_in=low, high_in=high)


def linear_map(img: np.ndarray, lim: StretchLimits) -> np.ndarray:
    """Linear remap of [low_in, high_in] to [low_out, high_out], clipping
    values beyond the input limits."""
    arr = validate_gray(img)
    lim.validate()
    t = (arr - lim.low_in) / (lim.high_in - lim.low_in)
    return lim.low_out + np.clip(t, 0.0, 1.0) * (lim.high_out - lim.low_out)


def contrast_stretch(img: np.ndarray, exponent: float = 3.0) -> np.ndarray:
    """Sigmoid-like stretch 1 / (1 + (m/v)^E) around the mean intensity m.

    v = 0 maps to 0 (the analytic limit); v = m maps to 0.5.
    """
    arr = validate_gray(img)
    if exponent <= 0.0:
        raise ValueError("exponent must be positive")
    m = float(arr.mean())
    out = np.zeros_like(arr)
    nz = arr > 0.0
    out[nz] = 1.0 / (1.0 + (m / arr[nz]) ** exponent)
    return out


def _bin_index(arr: np.ndarray) -> np.ndarray:
    return np.minimum((arr * NBINS).astype(np.int64), NBINS - 1)


def hist_equalize(img: np.ndarray) -> np.ndarray:
    """Global histogram equalization over 256 bins (monotone CDF remap)."""
    arr = validate_gray(img)
    bins = _bin_index(arr)
    hist = np.bincount(bins.ravel(), minlength=NBINS)
    cdf = np.cumsum(hist) / arr.size
    return cdf[bins]


def _clipped_cdf(hist: np.ndarray, clip_count: float) -> np.ndarray:
    """Clip bins at clip_count, spread the excess uniformly, return the CDF."""
    clipped = np.minimum(hist, clip_count)
    excess = hist.sum() - clipped.sum()
    clipped = clipped + excess / NBINS
    total = clipped.sum()
    return np.cumsum(clipped) / total


def clahe(img: np.ndarray, cfg: ClaheConfig = ClaheConfig()) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization.

    The image is split into tile x tile squares (edge-replicated padding
    fills partial tiles), each tile's clipped CDF defines a local mapping,
    and every pixel blends the four surrounding tile mappings bilinearly.
    """
    arr = validate_gray(img)
    cfg.validate()
    h, w = arr.shape
    t = cfg.tile
    nty = max(1, -(-h // t))
    ntx = max(1, -(-w // t))
    padded = np.pad(arr, ((0, nty * t - h), (0, ntx * t - w)), mode="edge")
    bins = _bin_index(padded)

    clip_count = cfg.clip * (t * t)
    maps = np.empty((nty, ntx, NBINS))
    for ty in range(nty):
        for tx in range(ntx):
            tile_bins = bins[ty * t : (ty + 1) * t, tx * t : (tx + 1) * t]
            hist = np.bincount(tile_bins.ravel(), minlength=NBINS).astype(np.float64)
            maps[ty, tx] = _clipped_cdf(hist, clip_count)

    # bilinear blend between tile centers; clamp beyond the outer centers
    yy, xx = np.mgrid[0:h, 0:w]
    gy = np.clip((yy - (t - 1) / 2.0) / t, 0.0, nty - 1.0)
    gx = np.clip((xx - (t - 1) / 2.0) / t, 0.0, ntx - 1.0)
    y0 = np.minimum(gy.astype(np.int64), nty - 1)
    x0 = np.minimum(gx.astype(np.int64), ntx - 1)
    y1 = np.minimum(y0 + 1, nty - 1)
    x1 = np.minimum(x0 + 1, ntx - 1)
    fy = gy - y0
    fx = gx - x0

    b = bins[:h, :w]
    v00 = maps[y0, x0, b]
    v01 = maps[y0, x1, b]
    v10 = maps[y1, x0, b]
    v11 = maps[y1, x1, b]
    # anchored form of bilinear interpolation: exact when all corners agree
    blend = v00 + fx * (v01 - v00) + fy * (v10 - v00) + fy * fx * (v00 + v11 - v01 - v10)
    return np.clip(blend, 0.0, 1.0)


def histogram_entropy(img: np.ndarray) -> float:
    """Shannon entropy (bits) of the 256-bin intensity histogram."""
    arr = validate_gray(img)
    hist = np.bincount(_bin_index(arr).ravel(), minlength=NBINS)
    p = hist[hist > 0] / arr.size
    return float(-(p * np.log2(p)).sum())
