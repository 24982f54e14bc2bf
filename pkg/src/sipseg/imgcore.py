"""Canonical image types, file I/O, and the synthetic-eye test corpus.

Images are 2-D float64 arrays with values in [0, 1].  Binary masks are
2-D bool arrays.  Label maps are 2-D uint8 arrays over the four classes

    0 = periocular (background), 1 = sclera, 2 = iris, 3 = pupil.

The canonical on-disk format is 8-bit binary PGM (P5, maxval 255);
grayscale PNG is accepted on read only.  Label maps are stored as PGM
files whose raw bytes are the class ids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LabelValueError, MalformedImageError, NonGrayscaleError, ShapeMismatchError

NUM_CLASSES = 4
CLASS_NAMES = ("periocular", "sclera", "iris", "pupil")


# ---------------------------------------------------------------------------
# validation helpers

def validate_gray(img: np.ndarray) -> np.ndarray:
    """Check that *img* is a valid grayscale image and return it as float64."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeMismatchError(f"expected a 2-D image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise MalformedImageError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise MalformedImageError("image values outside [0, 1]")
    return arr


def validate_labels(labels: np.ndarray) -> np.ndarray:
    """Check that *labels* is a valid class-id map and return it as uint8."""
    arr = np.asarray(labels)
    if arr.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-D label map, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() >= NUM_CLASSES):
        raise LabelValueError(f"label ids must lie in 0..{NUM_CLASSES - 1}")
    return arr.astype(np.uint8)


def require_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")


def quantize(img: np.ndarray) -> np.ndarray:
    """Quantize [0,1] scalars to uint8 via round(v*255), half away from zero."""
    return np.clip(np.floor(np.asarray(img, dtype=np.float64) * 255.0 + 0.5), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# PGM / PNG I/O

def _read_pgm_tokens(data: bytes, count: int, pos: int) -> tuple[list[int], int]:
    """Read *count* ASCII integers from a PGM header, skipping comments."""
    tokens: list[int] = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise MalformedImageError("unexpected end of PGM header")
        try:
            tokens.append(int(data[start:pos]))
        except ValueError as exc:
            raise MalformedImageError(f"bad PGM header token {data[start:pos]!r}") from exc
    return tokens, pos


def _read_pgm_bytes(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] != b"P5":
        raise MalformedImageError(f"{path}: not a binary PGM (P5) file")
    try:
        (width, height, maxval), pos = _read_pgm_tokens(data, 3, 2)
    except MalformedImageError as exc:
        raise MalformedImageError(f"{path}: {exc}") from None
    if width < 1 or height < 1:
        raise MalformedImageError(f"{path}: bad dimensions {width}x{height}")
    if maxval != 255:
        raise NonGrayscaleError(f"{path}: only 8-bit PGM (maxval 255) is supported, got {maxval}")
    pos += 1  # single whitespace byte before the raster
    raster = data[pos : pos + width * height]
    if len(raster) != width * height:
        raise MalformedImageError(f"{path}: truncated raster ({len(raster)} of {width * height} bytes)")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width)


def _read_png_bytes(path: str) -> np.ndarray:
    from PIL import Image

    with Image.open(path) as im:
        if im.mode != "L":
            raise NonGrayscaleError(f"{path}: PNG mode {im.mode!r} is not 8-bit grayscale")
        return np.asarray(im, dtype=np.uint8)


def read_gray(path: str) -> np.ndarray:
    """Read an 8-bit grayscale PGM or PNG; byte p maps to p/255 exactly."""
    raw = _read_png_bytes(path) if str(path).lower().endswith(".png") else _read_pgm_bytes(path)
    return raw.astype(np.float64) / 255.0


def write_gray(img: np.ndarray, path: str) -> None:
    """Write as binary PGM.  read(write(img)) equals quantize(img)/255 exactly."""
    arr = validate_gray(img)
    _write_pgm_bytes(quantize(arr), path)


def _write_pgm_bytes(raw: np.ndarray, path: str) -> None:
    height, width = raw.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        fh.write(raw.astype(np.uint8).tobytes())


def read_labels(path: str) -> np.ndarray:
    """Read a label map stored as raw class ids in a PGM file."""
    raw = _read_pgm_bytes(path)
    if raw.size and raw.max() >= NUM_CLASSES:
        raise LabelValueError(f"{path}: label id {int(raw.max())} outside 0..{NUM_CLASSES - 1}")
    return raw.astype(np.uint8)


def write_labels(labels: np.ndarray, path: str) -> None:
    _write_pgm_bytes(validate_labels(labels), path)


# ---------------------------------------------------------------------------
# synthetic eye generator

@dataclass(frozen=True)
class SyntheticEyeSpec:
    """Geometry and photometry of one rendered eye.

    ``levels`` are the flat intensities of (periocular, sclera, iris,
    pupil).  ``reflections`` is a list of bright specular spots (x, y, r)
    rendered at intensity 1.0.
    """

    width: int = 128
    height: int = 128
    pupil_center: tuple[float, float] = (64.0, 64.0)  # (x, y)
    pupil_radius: float = 14.0
    iris_radius: float = 32.0
    sclera_axes: tuple[float, float] = (56.0, 40.0)  # semi-axes (x, y)
    levels: tuple[float, float, float, float] = (0.55, 0.85, 0.35, 0.05)
    noise_variance: float = 0.0
    reflections: tuple[tuple[float, float, float], ...] = ()
    eyelash_count: int = 0

    def validate(self) -> None:
        cx, cy = self.pupil_center
        ax, ay = self.sclera_axes
        if not (self.pupil_radius < self.iris_radius < min(ax, ay)):
            raise ValueError("need pupil radius < iris radius < min sclera axis")
        if not (0 <= cx - ax and cx + ax <= self.width - 1 and 0 <= cy - ay and cy + ay <= self.height - 1):
            raise ValueError("sclera ellipse out of image bounds")
        for sx, sy, sr in self.reflections:
            if not (0 <= sx - sr and sx + sr <= self.width - 1 and 0 <= sy - sr and sy + sr <= self.height - 1):
                raise ValueError("reflection spot out of image bounds")
        for lv in self.levels:
            if not 0.0 <= lv <= 1.0:
                raise ValueError("region levels must lie in [0, 1]")


def render_synthetic_eye(spec: SyntheticEyeSpec, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Render (image, labels) deterministically from (spec, seed).

    Labels: pupil disk = 3, iris annulus = 2, remaining sclera ellipse = 1,
    everything else = 0.  The image carries the per-region levels plus
    optional eyelash strokes, seeded Gaussian noise, and reflection spots.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    cx, cy = spec.pupil_center
    ax, ay = spec.sclera_axes
    yy, xx = np.mgrid[0 : spec.height, 0 : spec.width].astype(np.float64)
    d2 = (xx - cx) ** 2 + (yy - cy) ** 2

    labels = np.zeros((spec.height, spec.width), dtype=np.uint8)
    labels[((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2 <= 1.0] = 1
    labels[d2 <= spec.iris_radius**2] = 2
    labels[d2 <= spec.pupil_radius**2] = 3

    img = np.asarray(spec.levels, dtype=np.float64)[labels]

    for _ in range(spec.eyelash_count):
        img = _draw_eyelash(img, labels, spec, rng)

    if spec.noise_variance > 0.0:
        img = img + rng.normal(0.0, math.sqrt(spec.noise_variance), img.shape)
    img = np.clip(img, 0.0, 1.0)

    for sx, sy, sr in spec.reflections:
        img[(xx - sx) ** 2 + (yy - sy) ** 2 <= sr**2] = 1.0
    return img, labels


def _draw_eyelash(img: np.ndarray, labels: np.ndarray, spec: SyntheticEyeSpec, rng) -> np.ndarray:
    """Mark one dark stroke in the periocular region above the eye."""
    cx, cy = spec.pupil_center
    ax, ay = spec.sclera_axes
    theta = rng.uniform(-1.1, 1.1)  # fan around straight-up
    x0 = cx + rng.uniform(-ax, ax)
    y0 = cy - ay * math.sqrt(max(0.0, 1.0 - ((x0 - cx) / ax) ** 2))
    length = rng.uniform(0.4, 0.9) * spec.iris_radius
    steps = max(2, int(length * 2))
    ts = np.linspace(0.0, length, steps)
    xs = np.clip(np.round(x0 + ts * math.sin(theta)).astype(int), 0, spec.width - 1)
    ys = np.clip(np.round(y0 - ts * math.cos(theta)).astype(int), 0, spec.height - 1)
    keep = labels[ys, xs] == 0
    img[ys[keep], xs[keep]] = 0.15
    return img


def sample_eye_spec(rng, width: int = 128, height: int = 128) -> SyntheticEyeSpec:
    """Draw a randomized but always-valid eye spec for corpus generation."""
    short = min(width, height)
    pupil_r = rng.uniform(0.07, 0.13) * short
    iris_r = pupil_r + rng.uniform(0.10, 0.16) * short
    ax = iris_r + rng.uniform(0.12, 0.18) * short
    ay = iris_r + rng.uniform(0.04, 0.08) * short
    cx = width / 2 + rng.uniform(-2.0, 2.0)
    cy = height / 2 + rng.uniform(-2.0, 2.0)
    ax = min(ax, cx - 1, width - 2 - cx)
    ay = min(ay, cy - 1, height - 2 - cy)
    n_spots = int(rng.integers(0, 3))
    spots = []
    for _ in range(n_spots):
        ang = rng.uniform(0, 2 * math.pi)
        rad = rng.uniform(0.3, 0.8) * iris_r
        spots.append((cx + rad * math.cos(ang), cy + rad * math.sin(ang), rng.uniform(1.5, 3.0)))
    return SyntheticEyeSpec(
        width=width,
        height=height,
        pupil_center=(cx, cy),
        pupil_radius=pupil_r,
        iris_radius=iris_r,
        sclera_axes=(ax, ay),
        levels=(
            rng.uniform(0.5, 0.6),
            rng.uniform(0.8, 0.9),
            rng.uniform(0.3, 0.42),
            rng.uniform(0.02, 0.08),
        ),
        noise_variance=float(rng.uniform(0.001, 0.004)),
        reflections=tuple(spots),
        eyelash_count=int(rng.integers(4, 10)),
    )
