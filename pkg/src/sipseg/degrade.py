"""Degradation synthesis and the residual data model.

A degraded image is the pristine image with a random combination of
Gaussian noise, center-anchored up-scaling, small rotation, and motion
blur applied (each included with probability 1/2, at least one always
included).  The residual is the plain difference degraded - pristine;
reconstruction subtracts it back and clamps.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import warp
from .imgcore import read_gray, require_same_shape, validate_gray, write_gray

PATCH_SIZE = 50


@dataclass(frozen=True)
class DistortionSpec:
    """Sampling ranges for the four distortion factors."""

    noise_variance: tuple[float, float] = (0.005, 0.015)  # Gaussian, zero mean
    scale: tuple[float, float] = (1.05, 1.1)
    rotation_deg: tuple[float, float] = (-5.0, 5.0)
    blur_len_h: tuple[int, int] = (1, 9)
    blur_len_v: tuple[int, int] = (1, 9)
    blur_theta_deg: tuple[float, float] = (-20.0, 20.0)


@dataclass(frozen=True)
class DistortionDraw:
    """One concrete sample from a DistortionSpec."""

    use_noise: bool
    noise_variance: float
    noise_seed: int
    use_scale: bool
    scale: float
    use_rotation: bool
    rotation_deg: float
    use_blur: bool
    blur_len_h: int
    blur_len_v: int
    blur_theta_deg: float

    def to_json_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def sample_distortion(spec: DistortionSpec, rng: np.random.Generator) -> DistortionDraw:
    """Draw which distortions apply and their parameters.

    Each factor is included independently with probability 1/2; if none
    came up, one is forced uniformly at random.
    """
    use = rng.random(4) < 0.5
    if not use.any():
        use[rng.integers(0, 4)] = True
    return DistortionDraw(
        use_noise=bool(use[0]),
        noise_variance=float(rng.uniform(*spec.noise_variance)),
        noise_seed=int(rng.integers(0, 2**63 - 1)),
        use_scale=bool(use[1]),
        scale=float(rng.uniform(*spec.scale)),
        use_rotation=bool(use[2]),
        rotation_deg=float(rng.uniform(*spec.rotation_deg)),
        use_blur=bool(use[3]),
        blur_len_h=int(rng.integers(spec.blur_len_h[0], spec.blur_len_h[1] + 1)),
        blur_len_v=int(rng.integers(spec.blur_len_v[0], spec.blur_len_v[1] + 1)),
        blur_theta_deg=float(rng.uniform(*spec.blur_theta_deg)),
    )


def motion_blur_kernel(length: int, theta_deg: float) -> np.ndarray:
    """Normalized line kernel: *length* unit-spaced points splatted
    bilinearly along the direction theta.  Length 1 is the identity."""
    if length < 1:
        raise ValueError("length must be >= 1")
    if length == 1:
        return np.ones((1, 1))
    half = (length - 1) / 2.0
    rad = int(math.ceil(half)) + 1
    size = 2 * rad + 1
    kern = np.zeros((size, size))
    c, s = math.cos(math.radians(theta_deg)), math.sin(math.radians(theta_deg))
    for t in np.linspace(-half, half, length):
        x = rad + t * c
        y = rad - t * s
        x0, y0 = int(math.floor(x)), int(math.floor(y))
        fx, fy = x - x0, y - y0
        kern[y0, x0] += (1 - fy) * (1 - fx)
        kern[y0, x0 + 1] += (1 - fy) * fx
        kern[y0 + 1, x0] += fy * (1 - fx)
        kern[y0 + 1, x0 + 1] += fy * fx
    return kern / kern.sum()


def convolve_replicate(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Small-kernel 2-D convolution with edge-replicated borders."""
    kh, kw = kernel.shape
    ry, rx = kh // 2, kw // 2
    padded = np.pad(img, ((ry, ry), (rx, rx)), mode="edge")
    out = np.zeros_like(img)
    h, w = img.shape
    for dy in range(kh):
        for dx in range(kw):
            k = kernel[dy, dx]
            if k != 0.0:
                out += k * padded[dy : dy + h, dx : dx + w]
    return out


def apply_distortion(img: np.ndarray, draw: DistortionDraw) -> np.ndarray:
    """Apply the drawn distortions in order: noise, scale, rotation, blur."""
    arr = validate_gray(img)
    h, w = arr.shape
    out = arr
    if draw.use_noise:
        noise_rng = np.random.default_rng(draw.noise_seed)
        out = out + noise_rng.normal(0.0, math.sqrt(draw.noise_variance), out.shape)
    if draw.use_scale:
        out = warp.warp_bilinear(out, warp.scale_matrix(w, h, draw.scale))
    if draw.use_rotation:
        out = warp.warp_bilinear(out, warp.rotation_matrix(w, h, draw.rotation_deg))
    if draw.use_blur:
        out = convolve_replicate(out, motion_blur_kernel(draw.blur_len_h, draw.blur_theta_deg))
        out = convolve_replicate(out, motion_blur_kernel(draw.blur_len_v, draw.blur_theta_deg + 90.0))
    return np.clip(out, 0.0, 1.0)


def degrade_image(img: np.ndarray, spec: DistortionSpec, seed: int) -> np.ndarray:
    """Sample a distortion combination from *spec* and apply it."""
    return apply_distortion(img, sample_distortion(spec, np.random.default_rng(seed)))


def residual(degraded: np.ndarray, pristine: np.ndarray) -> np.ndarray:
    """Signed difference degraded - pristine, range [-1, 1], unclamped."""
    y = np.asarray(degraded, dtype=np.float64)
    x = np.asarray(pristine, dtype=np.float64)
    require_same_shape(y, x)
    return y - x


def reconstruct(degraded: np.ndarray, res: np.ndarray) -> np.ndarray:
    """Subtract the residual from the degraded image, clamped to [0, 1]."""
    y = np.asarray(degraded, dtype=np.float64)
    r = np.asarray(res, dtype=np.float64)
    require_same_shape(y, r)
    return np.clip(y - r, 0.0, 1.0)


@dataclass(frozen=True)
class PatchPair:
    degraded: np.ndarray  # PATCH_SIZE x PATCH_SIZE window of the degraded image
    residual: np.ndarray  # same window of degraded - pristine
    offset: tuple[int, int]  # (row, col) of the window origin


def extract_patch_pairs(
    pristine: np.ndarray, degraded: np.ndarray, count: int, seed: int
) -> list[PatchPair]:
    """Cut *count* random 50x50 windows from the degraded/residual pair."""
    x = validate_gray(pristine)
    y = np.asarray(degraded, dtype=np.float64)
    require_same_shape(x, y)
    h, w = x.shape
    if h < PATCH_SIZE or w < PATCH_SIZE:
        raise ValueError(f"image {h}x{w} smaller than the {PATCH_SIZE}x{PATCH_SIZE} patch size")
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    res = y - x
    pairs = []
    for _ in range(count):
        r = int(rng.integers(0, h - PATCH_SIZE + 1))
        c = int(rng.integers(0, w - PATCH_SIZE + 1))
        pairs.append(
            PatchPair(
                degraded=y[r : r + PATCH_SIZE, c : c + PATCH_SIZE].copy(),
                residual=res[r : r + PATCH_SIZE, c : c + PATCH_SIZE].copy(),
                offset=(r, c),
            )
        )
    return pairs


def half_mse(res: np.ndarray, target: np.ndarray) -> float:
    """Half mean squared error over patches: sum of squared-difference
    norms divided by twice the patch count.

    2-D inputs are a single patch; 3-D inputs are (N, H, W) stacks.
    """
    r = np.asarray(res, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    require_same_shape(r, t)
    if r.ndim == 2:
        r = r[None]
        t = t[None]
    elif r.ndim != 3:
        raise ValueError("expected a patch or a stack of patches")
    n = r.shape[0]
    return float(((r - t) ** 2).sum() / (2.0 * n))


# ---------------------------------------------------------------------------
# patch datastore: paired PGM files plus a JSON index

def save_patch_store(out_dir: str, pairs: list[PatchPair], source: str, seed: int) -> None:
    """Persist patch pairs as paired PGMs with a manifest.

    Residuals in [-1, 1] are stored as (r + 1) / 2 before 8-bit
    quantization; the manifest records the encoding.
    """
    os.makedirs(out_dir, exist_ok=True)
    items = []
    for i, pair in enumerate(pairs):
        deg_name = f"{i:04d}.deg.pgm"
        res_name = f"{i:04d}.res.pgm"
        write_gray(pair.degraded, os.path.join(out_dir, deg_name))
        write_gray((pair.residual + 1.0) / 2.0, os.path.join(out_dir, res_name))
        items.append(
            {
                "index": i,
                "source": source,
                "offset": list(pair.offset),
                "degraded": deg_name,
                "residual": res_name,
            }
        )
    manifest = {
        "patch_size": PATCH_SIZE,
        "seed": seed,
        "residual_encoding": "(r+1)/2 quantized to 8-bit",
        "items": items,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)


def load_patch_store(store_dir: str) -> list[PatchPair]:
    with open(os.path.join(store_dir, "manifest.json"), "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    pairs = []
    for item in manifest["items"]:
        deg = read_gray(os.path.join(store_dir, item["degraded"]))
        res = read_gray(os.path.join(store_dir, item["residual"])) * 2.0 - 1.0
        pairs.append(PatchPair(degraded=deg, residual=res, offset=tuple(item["offset"])))
    return pairs
