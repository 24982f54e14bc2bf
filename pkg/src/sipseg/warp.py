"""Inverse-mapped affine warps shared by augmentation and degradation.

Matrices are 2x3 row-major arrays mapping homogeneous *output* pixel
coordinates (x, y, 1) to *input* coordinates.  Composition therefore runs
right-to-left: ``compose(A, B)`` applies B's geometric effect first.
"""

from __future__ import annotations

import math

import numpy as np


def identity_matrix() -> np.ndarray:
    return np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def _as3x3(m: np.ndarray) -> np.ndarray:
    out = np.eye(3)
    out[:2, :] = m
    return out


def compose(*mats: np.ndarray) -> np.ndarray:
    """Compose inverse maps; the rightmost matrix is applied first."""
    acc = np.eye(3)
    for m in mats:
        acc = acc @ _as3x3(m)
    return acc[:2, :]


def flip_matrix(width: int, height: int, flip_x: bool, flip_y: bool) -> np.ndarray:
    m = identity_matrix()
    if flip_x:
        m[0, 0] = -1.0
        m[0, 2] = float(width - 1)
    if flip_y:
        m[1, 1] = -1.0
        m[1, 2] = float(height - 1)
    return m


def rotation_matrix(width: int, height: int, degrees: float) -> np.ndarray:
    """Inverse map of a counter-clockwise rotation about the image center."""
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    # inverse of a CCW rotation is the CW rotation by the same angle
    c, s = math.cos(math.radians(degrees)), math.sin(math.radians(degrees))
    return np.array(
        [
            [c, -s, cx - c * cx + s * cy],
            [s, c, cy - s * cx - c * cy],
        ]
    )


def scale_matrix(width: int, height: int, factor: float) -> np.ndarray:
    """Inverse map of scaling by *factor* about the image center."""
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    inv = 1.0 / factor
    return np.array([[inv, 0.0, cx * (1.0 - inv)], [0.0, inv, cy * (1.0 - inv)]])


def translation_matrix(dx: float, dy: float) -> np.ndarray:
    """Inverse map of shifting content by (+dx, +dy) pixels."""
    return np.array([[1.0, 0.0, -dx], [0.0, 1.0, -dy]])


def _sample_coords(shape: tuple[int, int], matrix: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    xs = matrix[0, 0] * xx + matrix[0, 1] * yy + matrix[0, 2]
    ys = matrix[1, 0] * xx + matrix[1, 1] * yy + matrix[1, 2]
    return xs, ys


def warp_bilinear(img: np.ndarray, matrix: np.ndarray, fill: float = 0.0) -> np.ndarray:
    """Bilinear resampling; source coordinates outside the image give *fill*.

    Integer source coordinates reproduce pixels bit-exactly, so identity
    and pure flip/integer-shift maps are lossless.
    """
    h, w = img.shape
    xs, ys = _sample_coords(img.shape, matrix)
    valid = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = np.clip(xs, 0, w - 1) - x0
    fy = np.clip(ys, 0, h - 1) - y0
    out = (
        img[y0, x0] * (1.0 - fy) * (1.0 - fx)
        + img[y0, x1] * (1.0 - fy) * fx
        + img[y1, x0] * fy * (1.0 - fx)
        + img[y1, x1] * fy * fx
    )
    return np.where(valid, out, fill)


def warp_nearest(labels: np.ndarray, matrix: np.ndarray, fill: int = 0) -> np.ndarray:
    """Nearest-neighbour resampling for label maps; never invents classes."""
    h, w = labels.shape
    xs, ys = _sample_coords(labels.shape, matrix)
    xr = np.floor(xs + 0.5).astype(np.int64)
    yr = np.floor(ys + 0.5).astype(np.int64)
    valid = (xr >= 0) & (xr <= w - 1) & (yr >= 0) & (yr <= h - 1)
    out = labels[np.clip(yr, 0, h - 1), np.clip(xr, 0, w - 1)]
    return np.where(valid, out, np.asarray(fill, dtype=labels.dtype))
