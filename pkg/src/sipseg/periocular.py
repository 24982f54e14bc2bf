"""Periocular extraction and suppression.

Pupil localization scans circle candidates for the maximum smoothed
radial derivative of the circular mean intensity; the periocular map is
a dark-polarity threshold with the located pupil disk removed; the
suppression stage swaps in fuzzy-filtered pixels wherever that map is
set.  ``preprocess_pipeline`` chains every preprocessing stage.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import enhance, kernels, restore
from .errors import ConfigError, DegenerateImageError, PupilNotFoundError
from .imgcore import require_same_shape, validate_gray


@dataclass(frozen=True)
class PupilCircle:
    row: float
    col: float
    radius: float
    response: float


@dataclass(frozen=True)
class AtmedConfig:
    window: int = 21  # local search window W_s; padding is (W_s - 1) // 2

    def validate(self) -> None:
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError("window must be odd and >= 1")

    @property
    def padding(self) -> int:
        return (self.window - 1) // 2


@dataclass(frozen=True)
class DioConfig:
    r_min: int = 5
    r_max: int | None = None  # default floor(0.25 * min(H, W))
    sigma: float = 1.0  # radial smoothing of the derivative
    n_angles: int = 360
    coarse_stride: int = 2
    refine_span: int = 2  # stride-1 refinement window half-size
    min_response: float = 0.01

    def validate(self) -> None:
        if self.r_min < 5:
            raise ValueError("r_min must be >= 5")
        if self.n_angles < 8:
            raise ValueError("n_angles must be >= 8")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.coarse_stride < 1 or self.refine_span < 0:
            raise ValueError("coarse_stride must be >= 1 and refine_span >= 0")


def _gaussian_kernel(sigma: float) -> np.ndarray:
    rad = max(1, int(math.ceil(4.0 * sigma)))
    xs = np.arange(-rad, rad + 1, dtype=np.float64)
    k = np.exp(-(xs**2) / (2.0 * sigma * sigma))
    return k / k.sum()


def _smooth_rows(d: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Convolve each row with the kernel after edge-replicating the ends."""
    rad = kernel.size // 2
    padded = np.pad(d, ((0, 0), (rad, rad)), mode="edge")
    out = np.zeros_like(d)
    for k in range(kernel.size):
        out += kernel[k] * padded[:, k : k + d.shape[1]]
    return out


def _best_candidate(resp: np.ndarray, radii: np.ndarray, rows: np.ndarray, cols: np.ndarray):
    """Arg-max over (center, radius); ties prefer the larger radius."""
    if not np.isfinite(resp).any():
        return None
    best = np.nanmax(resp)
    cand = np.argwhere(resp == best)
    ri = cand[:, 1].max()
    ci = cand[cand[:, 1] == ri][0, 0]
    return float(rows[ci]), float(cols[ci]), float(radii[ri]), float(best)


def _scan_centers(img: np.ndarray, rows: np.ndarray, cols: np.ndarray, radii: np.ndarray, cfg: DioConfig, trig):
    """Response of every (center, radius) candidate; NaN where undefined."""
    sin_t, cos_t = trig
    profiles = kernels.circle_profiles(img, rows, cols, radii, sin_t, cos_t)
    deriv = profiles[:, 1:] - profiles[:, :-1]
    resp = np.full_like(deriv, np.nan)
    kernel = _gaussian_kernel(cfg.sigma)
    valid_len = np.sum(np.isfinite(deriv), axis=1)
    for n in np.unique(valid_len):
        if n < 1:
            continue
        sel = valid_len == n
        resp[sel, :n] = np.abs(_smooth_rows(deriv[sel, :n], kernel))
    return resp


def locate_pupil(img: np.ndarray, cfg: DioConfig = DioConfig()) -> PupilCircle:
    """Find the circle maximizing the smoothed radial intensity step.

    Circular means use equiangular bilinear samples; the radial forward
    difference is Gaussian-smoothed along an integer radius sweep.  A
    stride-2 scan over all interior centers is refined at stride 1 in a
    5x5 neighbourhood of the coarse optimum.  Raises PupilNotFoundError
    when the best response falls below the configured floor.
    """
    arr = np.ascontiguousarray(np.asarray(img, dtype=np.float64))
    if arr.ndim != 2:
        raise DegenerateImageError("expected a 2-D image")
    cfg.validate()
    h, w = arr.shape
    r_max = cfg.r_max if cfg.r_max is not None else int(0.25 * min(h, w))
    if r_max <= cfg.r_min:
        raise ValueError(f"r_max ({r_max}) must exceed r_min ({cfg.r_min}); image too small")
    radii = np.arange(cfg.r_min, r_max + 1, dtype=np.float64)
    angles = 2.0 * math.pi * np.arange(cfg.n_angles) / cfg.n_angles
    trig = (np.sin(angles), np.cos(angles))

    gy, gx = np.mgrid[0 : h : cfg.coarse_stride, 0 : w : cfg.coarse_stride]
    rows = gy.ravel().astype(np.float64)
    cols = gx.ravel().astype(np.float64)
    fits = np.minimum(np.minimum(rows, cols), np.minimum(h - 1 - rows, w - 1 - cols)) >= cfg.r_min + 1
    rows, cols = rows[fits], cols[fits]
    if rows.size == 0:
        raise PupilNotFoundError("image too small for the radius range")

    coarse = _best_candidate(_scan_centers(arr, rows, cols, radii, cfg, trig), radii, rows, cols)
    if coarse is None or coarse[3] < cfg.min_response:
        raise PupilNotFoundError("no circular contour above the response floor")

    cy, cx = int(coarse[0]), int(coarse[1])
    span = cfg.refine_span
    fy, fx = np.mgrid[
        max(0, cy - span) : min(h, cy + span + 1), max(0, cx - span) : min(w, cx + span + 1)
    ]
    rrows = fy.ravel().astype(np.float64)
    rcols = fx.ravel().astype(np.float64)
    best = _best_candidate(_scan_centers(arr, rrows, rcols, radii, cfg, trig), radii, rrows, rcols)
    if best is None or best[3] < cfg.min_response:
        raise PupilNotFoundError("no circular contour above the response floor")
    return PupilCircle(row=best[0], col=best[1], radius=best[2], response=best[3])


def pupil_disk_mask(shape: tuple[int, int], circle: PupilCircle) -> np.ndarray:
    yy, xx = np.mgrid[0 : shape[0], 0 : shape[1]].astype(np.float64)
    return (yy - circle.row) ** 2 + (xx - circle.col) ** 2 <= circle.radius**2


@dataclass(frozen=True)
class PeriocularExtraction:
    raw_mask: np.ndarray  # dark-structure map including the pupil
    mask: np.ndarray  # periocular map with the pupil disk removed
    pupil: PupilCircle | None  # None when pupil localization failed


def extract_periocular_mask(
    enhanced: np.ndarray,
    sensitivity: float = 0.375,
    dio: DioConfig = DioConfig(),
    window: int | None = None,
) -> PeriocularExtraction:
    """Dark-structure threshold minus the located pupil disk.

    On localization failure the raw mask is returned unchanged with
    ``pupil=None`` so the pipeline can continue with a warning.
    """
    arr = validate_gray(enhanced)
    dio.validate()
    raw = restore.adaptive_threshold(
        arr, restore.AdaptiveThresholdConfig(sensitivity=sensitivity, polarity="dark", window=window)
    )
    try:
        pupil = locate_pupil(raw.astype(np.float64), dio)
    except (PupilNotFoundError, ValueError):
        # ValueError here means the image is too small for the radius
        # sweep; config errors were raised by the eager validate above
        return PeriocularExtraction(raw_mask=raw, mask=raw.copy(), pupil=None)
    mask = raw & ~pupil_disk_mask(arr.shape, pupil)
    return PeriocularExtraction(raw_mask=raw, mask=mask, pupil=pupil)


def atmed_filter(img: np.ndarray, cfg: AtmedConfig = AtmedConfig()) -> np.ndarray:
    """Window-median-peaked triangular weighted average of each window.

    Pixels at the window median get weight 1; weights fall linearly to
    the window min and max (weight 1 throughout a side whose extent is
    zero).  Output lies within each window's [min, max].
    """
    arr = validate_gray(img)
    cfg.validate()
    return kernels.atmed(arr, cfg.window)


def suppress_periocular(filtered: np.ndarray, fuzzified: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Pixel-wise select: fuzzified where the mask is set, else filtered."""
    f = np.asarray(filtered, dtype=np.float64)
    fz = np.asarray(fuzzified, dtype=np.float64)
    m = np.asarray(mask, dtype=bool)
    require_same_shape(f, fz)
    require_same_shape(f, m)
    return np.where(m, fz, f)


# ---------------------------------------------------------------------------
# full preprocessing pipeline

@dataclass(frozen=True)
class PipelineConfig:
    """Every stage parameter of the preprocessing chain.

    The JSON form groups parameters by stage, e.g.::

        {"clahe": {"tile": 20, "clip": 0.005}, "nlm": {"h": 0.0275, ...}}
    """

    denoiser: str = "identity"  # "identity" or "nlm" (light pre-pass)
    stretch_tail: float = 0.01
    stretch_exponent: float = 3.0
    clahe: enhance.ClaheConfig = field(default_factory=enhance.ClaheConfig)
    reflect_sensitivity: float = 0.0
    reflect_dilate_radius: int = 2
    threshold_sensitivity: float = 0.375
    threshold_window: int | None = None
    nlm: restore.NlmConfig = field(default_factory=restore.NlmConfig)
    dio: DioConfig = field(default_factory=DioConfig)
    atmed: AtmedConfig = field(default_factory=AtmedConfig)

    def validate(self) -> None:
        if self.denoiser not in ("identity", "nlm"):
            raise ConfigError(f"unknown denoiser {self.denoiser!r}")
        self.clahe.validate()
        self.nlm.validate()
        self.dio.validate()
        self.atmed.validate()

    def to_json_dict(self) -> dict:
        return {
            "denoiser": self.denoiser,
            "stretch": {"tail": self.stretch_tail, "exponent": self.stretch_exponent},
            "clahe": {"tile": self.clahe.tile, "clip": self.clahe.clip},
            "reflection": {
                "sensitivity": self.reflect_sensitivity,
                "dilate_radius": self.reflect_dilate_radius,
            },
            "threshold": {
                "sensitivity": self.threshold_sensitivity,
                "window": self.threshold_window,
            },
            "nlm": {
                "h": self.nlm.smoothing,
                "search": self.nlm.search,
                "comparison": self.nlm.comparison,
                "noise_variance": self.nlm.noise_variance,
            },
            "dio": {
                "r_min": self.dio.r_min,
                "r_max": self.dio.r_max,
                "sigma": self.dio.sigma,
                "angles": self.dio.n_angles,
                "min_response": self.dio.min_response,
            },
            "atmed": {"ws": self.atmed.window},
        }


_CONFIG_SECTIONS = {
    "denoiser",
    "stretch",
    "clahe",
    "reflection",
    "threshold",
    "nlm",
    "dio",
    "atmed",
}


def pipeline_config_from_dict(data: dict) -> PipelineConfig:
    """Build a PipelineConfig from its (possibly partial) JSON form."""
    if not isinstance(data, dict):
        raise ConfigError("pipeline config must be a JSON object")
    unknown = set(data) - _CONFIG_SECTIONS
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    def section(name: str, allowed: set[str]) -> dict:
        sec = data.get(name, {})
        if not isinstance(sec, dict):
            raise ConfigError(f"config section {name!r} must be an object")
        bad = set(sec) - allowed
        if bad:
            raise ConfigError(f"unknown keys in {name!r}: {sorted(bad)}")
        return sec

    stretch = section("stretch", {"tail", "exponent"})
    cl = section("clahe", {"tile", "clip"})
    refl = section("reflection", {"sensitivity", "dilate_radius"})
    thr = section("threshold", {"sensitivity", "window"})
    nlm = section("nlm", {"h", "search", "comparison", "noise_variance"})
    dio = section("dio", {"r_min", "r_max", "sigma", "angles", "min_response"})
    atm = section("atmed", {"ws"})
    try:
        cfg = PipelineConfig(
            denoiser=data.get("denoiser", "identity"),
            stretch_tail=float(stretch.get("tail", 0.01)),
            stretch_exponent=float(stretch.get("exponent", 3.0)),
            clahe=enhance.ClaheConfig(tile=int(cl.get("tile", 20)), clip=float(cl.get("clip", 0.005))),
            reflect_sensitivity=float(refl.get("sensitivity", 0.0)),
            reflect_dilate_radius=int(refl.get("dilate_radius", 2)),
            threshold_sensitivity=float(thr.get("sensitivity", 0.375)),
            threshold_window=None if thr.get("window") is None else int(thr["window"]),
            nlm=restore.NlmConfig(
                smoothing=float(nlm.get("h", 7.0 / 255.0)),
                search=int(nlm.get("search", 25)),
                comparison=int(nlm.get("comparison", 17)),
                noise_variance=float(nlm.get("noise_variance", 0.0)),
            ),
            dio=DioConfig(
                r_min=int(dio.get("r_min", 5)),
                r_max=None if dio.get("r_max") is None else int(dio["r_max"]),
                sigma=float(dio.get("sigma", 1.0)),
                n_angles=int(dio.get("angles", 360)),
                min_response=float(dio.get("min_response", 0.01)),
            ),
            atmed=AtmedConfig(window=int(atm.get("ws", 21))),
        )
        cfg.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid pipeline config: {exc}") from exc
    return cfg


def load_pipeline_config(path: str) -> PipelineConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return pipeline_config_from_dict(data)


@dataclass(frozen=True)
class PipelineResult:
    preprocessed: np.ndarray  # final suppressed image
    denoised: np.ndarray  # after denoise slot + intensity transforms
    enhanced: np.ndarray  # after histogram equalization + CLAHE
    filtered: np.ndarray  # after reflection removal + NLM
    periocular: np.ndarray  # periocular mask (pupil removed)
    fuzzified: np.ndarray  # ATMED-filtered image
    pupil: PupilCircle | None

    def stages(self) -> dict[str, np.ndarray]:
        return {
            "denoised": self.denoised,
            "enhanced": self.enhanced,
            "filtered": self.filtered,
            "periocular": self.periocular.astype(np.float64),
            "fuzzified": self.fuzzified,
        }


def preprocess_pipeline(img: np.ndarray, cfg: PipelineConfig = PipelineConfig()) -> PipelineResult:
    """Run the five preprocessing stages in order.

    1. denoise slot + linear stretch + contrast stretch
    2. histogram equalization + CLAHE
    3. specular hole patching + non-local means
    4. periocular extraction (dark threshold minus pupil disk)
    5. fuzzy blur + replacement under the periocular mask
    """
    arr = validate_gray(img)
    cfg.validate()

    d1 = restore.nlm_filter(arr, cfg.nlm) if cfg.denoiser == "nlm" else arr
    try:
        lim = enhance.stretch_limits(d1, cfg.stretch_tail)
        stretched = enhance.linear_map(d1, lim)
    except DegenerateImageError:
        stretched = d1
    denoised = enhance.contrast_stretch(stretched, cfg.stretch_exponent)

    enhanced = enhance.clahe(enhance.hist_equalize(denoised), cfg.clahe)

    patched = restore.remove_ocular_reflections(
        enhanced, cfg.reflect_sensitivity, cfg.reflect_dilate_radius, cfg.threshold_window
    )
    filtered = restore.nlm_filter(patched, cfg.nlm)

    extraction = extract_periocular_mask(enhanced, cfg.threshold_sensitivity, cfg.dio, cfg.threshold_window)

    fuzzified = atmed_filter(filtered, cfg.atmed)
    preprocessed = suppress_periocular(filtered, fuzzified, extraction.mask)
    return PipelineResult(
        preprocessed=preprocessed,
        denoised=denoised,
        enhanced=enhanced,
        filtered=filtered,
        periocular=extraction.mask,
        fuzzified=fuzzified,
        pupil=extraction.pupil,
    )
