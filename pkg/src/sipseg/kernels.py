"""Hot per-pixel kernels with two interchangeable backends.

Every kernel here exists twice: a numba ``@njit`` version built from
scalar loops, and a vectorized pure-numpy version.  The active backend is
chosen at import time: numba when importable, unless the environment
variable ``SIPSEG_BACKEND=numpy`` forces the fallback.  Both versions
implement the same arithmetic; ``benchmarks/bench_backends.py`` compares
their throughput.

All kernels take float64 inputs that the calling module has already
validated and padded where required.
"""

from __future__ import annotations

import math
import os
import warnings

import numpy as np

warnings.filterwarnings("ignore", category=Warning, module="numba")

_env = os.environ.get("SIPSEG_BACKEND", "").strip().lower()
if _env in ("", "auto"):
    _want_numba = True
elif _env == "numba":
    _want_numba = True
elif _env == "numpy":
    _want_numba = False
else:
    raise ValueError(f"SIPSEG_BACKEND must be 'numba' or 'numpy', got {_env!r}")

HAS_NUMBA = False
if _want_numba:
    try:
        import numba

        HAS_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a hard dep, but stay usable
        HAS_NUMBA = False

ACTIVE_BACKEND = "numba" if HAS_NUMBA else "numpy"


def _box_mean_from_sq(diff_sq: np.ndarray, c_rad: int) -> np.ndarray:
    """Mean over the (2c+1)^2 window of *diff_sq*, valid positions only."""
    k = 2 * c_rad + 1
    cs = np.cumsum(diff_sq, axis=0)
    cs = np.vstack([np.zeros((1, diff_sq.shape[1])), cs])
    rows = cs[k:, :] - cs[:-k, :]
    cs2 = np.cumsum(rows, axis=1)
    cs2 = np.hstack([np.zeros((rows.shape[0], 1)), cs2])
    return (cs2[:, k:] - cs2[:, :-k]) / float(k * k)


# ---------------------------------------------------------------------------
# non-local means

def nlm_numpy(img: np.ndarray, h: float, search: int, comparison: int, noise_var: float = 0.0) -> np.ndarray:
    """Patch-similarity weighted average over the search window.

    The per-offset decomposition computes, for each displacement in the
    search window, the mean squared patch difference via a box filter of
    the squared shifted difference.  Output pixels are anchored at their
    own value so constant regions pass through bit-exactly.
    """
    hh, ww = img.shape
    s_rad, c_rad = search // 2, comparison // 2
    pad = s_rad + c_rad
    padded = np.pad(img, pad, mode="edge")
    inv_h2 = 1.0 / (h * h)
    two_nv = 2.0 * noise_var
    num = np.zeros((hh, ww))
    den = np.zeros((hh, ww))
    base = padded[s_rad : s_rad + hh + 2 * c_rad, s_rad : s_rad + ww + 2 * c_rad]
    for dy in range(-s_rad, s_rad + 1):
        for dx in range(-s_rad, s_rad + 1):
            shifted = padded[
                s_rad + dy : s_rad + dy + hh + 2 * c_rad,
                s_rad + dx : s_rad + dx + ww + 2 * c_rad,
            ]
            d2 = _box_mean_from_sq((base - shifted) ** 2, c_rad)
            w = np.exp(-np.maximum(d2 - two_nv, 0.0) * inv_h2)
            num += w * (padded[pad + dy : pad + dy + hh, pad + dx : pad + dx + ww] - img)
            den += w
    return img + num / den


if HAS_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def _nlm_jit(padded, hh, ww, s_rad, c_rad, inv_h2, two_nv):
        k = 2 * c_rad + 1
        n_patch = float(k * k)
        eh = hh + 2 * c_rad
        ew = ww + 2 * c_rad
        num = np.zeros((hh, ww))
        den = np.zeros((hh, ww))
        rows = np.empty((eh - k + 1, ew))
        d2 = np.empty((hh, ww))
        col = np.empty(eh)
        pad = s_rad + c_rad
        for dy in range(-s_rad, s_rad + 1):
            for dx in range(-s_rad, s_rad + 1):
                # vertical box sums of the squared difference image
                for j in range(ew):
                    acc = 0.0
                    for i in range(eh):
                        d = padded[s_rad + i, s_rad + j] - padded[s_rad + dy + i, s_rad + dx + j]
                        col[i] = d * d
                    for i in range(k):
                        acc += col[i]
                    rows[0, j] = acc
                    for i in range(1, eh - k + 1):
                        acc += col[i + k - 1] - col[i - 1]
                        rows[i, j] = acc
                # horizontal box sums, then weight accumulation
                for i in range(hh):
                    acc = 0.0
                    for j in range(k):
                        acc += rows[i, j]
                    d2[i, 0] = acc
                    for j in range(1, ww):
                        acc += rows[i, j + k - 1] - rows[i, j - 1]
                        d2[i, j] = acc
                for i in range(hh):
                    for j in range(ww):
                        e = d2[i, j] / n_patch - two_nv
                        if e < 0.0:
                            e = 0.0
                        w = math.exp(-e * inv_h2)
                        num[i, j] += w * (padded[pad + dy + i, pad + dx + j] - padded[pad + i, pad + j])
                        den[i, j] += w
        out = np.empty((hh, ww))
        for i in range(hh):
            for j in range(ww):
                out[i, j] = padded[pad + i, pad + j] + num[i, j] / den[i, j]
        return out

    def nlm_numba(img: np.ndarray, h: float, search: int, comparison: int, noise_var: float = 0.0) -> np.ndarray:
        s_rad, c_rad = search // 2, comparison // 2
        padded = np.pad(img, s_rad + c_rad, mode="edge")
        return _nlm_jit(padded, img.shape[0], img.shape[1], s_rad, c_rad, 1.0 / (h * h), 2.0 * noise_var)

    nlm = nlm_numba
else:
    nlm = nlm_numpy


# ---------------------------------------------------------------------------
# asymmetric triangular fuzzy filter, median-centered

def _atmed_weights(win: np.ndarray, wmin: np.ndarray, wmed: np.ndarray, wmax: np.ndarray) -> np.ndarray:
    dl = wmed - wmin
    dr = wmax - wmed
    left = np.where(dl > 0.0, 1.0 - (wmed - win) / np.where(dl > 0.0, dl, 1.0), 1.0)
    right = np.where(dr > 0.0, 1.0 - (win - wmed) / np.where(dr > 0.0, dr, 1.0), 1.0)
    return np.where(win <= wmed, left, right)


def atmed_numpy(img: np.ndarray, ws: int, block_rows: int = 16) -> np.ndarray:
    """Triangular-weighted window mean, peak at the window median."""
    rad = ws // 2
    hh, ww = img.shape
    padded = np.pad(img, rad, mode="edge")
    out = np.empty_like(img)
    view = np.lib.stride_tricks.sliding_window_view(padded, (ws, ws))
    for r0 in range(0, hh, block_rows):
        r1 = min(r0 + block_rows, hh)
        win = view[r0:r1].reshape(r1 - r0, ww, ws * ws)
        wmin = win.min(axis=2, keepdims=True)
        wmax = win.max(axis=2, keepdims=True)
        wmed = np.median(win, axis=2, keepdims=True)
        w = _atmed_weights(win, wmin, wmed, wmax)
        vals = (w * win).sum(axis=2) / w.sum(axis=2)
        out[r0:r1] = np.clip(vals, wmin[..., 0], wmax[..., 0])
    return out


if HAS_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def _atmed_jit(padded, hh, ww, rad):
        k = 2 * rad + 1
        n = k * k
        out = np.empty((hh, ww))
        buf = np.empty(n)
        for i in range(hh):
            for j in range(ww):
                t = 0
                wmin = padded[i, j]
                wmax = wmin
                for u in range(k):
                    for v in range(k):
                        val = padded[i + u, j + v]
                        buf[t] = val
                        if val < wmin:
                            wmin = val
                        elif val > wmax:
                            wmax = val
                        t += 1
                wmed = np.partition(buf, n // 2)[n // 2]
                dl = wmed - wmin
                dr = wmax - wmed
                num = 0.0
                den = 0.0
                for t in range(n):
                    v = buf[t]
                    if v <= wmed:
                        w = 1.0 if dl == 0.0 else 1.0 - (wmed - v) / dl
                    else:
                        w = 1.0 if dr == 0.0 else 1.0 - (v - wmed) / dr
                    num += w * v
                    den += w
                o = num / den
                if o < wmin:
                    o = wmin
                elif o > wmax:
                    o = wmax
                out[i, j] = o
        return out

    def atmed_numba(img: np.ndarray, ws: int) -> np.ndarray:
        rad = ws // 2
        return _atmed_jit(np.pad(img, rad, mode="edge"), img.shape[0], img.shape[1], rad)

    atmed = atmed_numba
else:
    atmed = atmed_numpy


# ---------------------------------------------------------------------------
# grayscale hole filling (reconstruction by erosion from a border marker)

def fill_holes_numpy(img: np.ndarray) -> np.ndarray:
    """Raise enclosed regional minima to their surrounding level.

    Marker starts at 1.0 everywhere except the border (which keeps the
    image values) and is eroded with a 4-connected cross until stable,
    clamped below by the image.  min/max arithmetic only, so the result
    is independent of the backend.
    """
    marker = np.ones_like(img)
    marker[0, :] = img[0, :]
    marker[-1, :] = img[-1, :]
    marker[:, 0] = img[:, 0]
    marker[:, -1] = img[:, -1]
    while True:
        p = np.pad(marker, 1, mode="edge")
        eroded = np.minimum.reduce([p[1:-1, 1:-1], p[:-2, 1:-1], p[2:, 1:-1], p[1:-1, :-2], p[1:-1, 2:]])
        nxt = np.maximum(eroded, img)
        if np.array_equal(nxt, marker):
            return marker
        marker = nxt


if HAS_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def _fill_holes_jit(img):
        hh, ww = img.shape
        marker = np.ones((hh, ww))
        for j in range(ww):
            marker[0, j] = img[0, j]
            marker[hh - 1, j] = img[hh - 1, j]
        for i in range(hh):
            marker[i, 0] = img[i, 0]
            marker[i, ww - 1] = img[i, ww - 1]
        changed = True
        while changed:
            changed = False
            for i in range(hh):
                for j in range(ww):
                    m = marker[i, j]
                    if i > 0 and marker[i - 1, j] < m:
                        m = marker[i - 1, j]
                    if j > 0 and marker[i, j - 1] < m:
                        m = marker[i, j - 1]
                    if m < img[i, j]:
                        m = img[i, j]
                    if m != marker[i, j]:
                        marker[i, j] = m
                        changed = True
            for i in range(hh - 1, -1, -1):
                for j in range(ww - 1, -1, -1):
                    m = marker[i, j]
                    if i < hh - 1 and marker[i + 1, j] < m:
                        m = marker[i + 1, j]
                    if j < ww - 1 and marker[i, j + 1] < m:
                        m = marker[i, j + 1]
                    if m < img[i, j]:
                        m = img[i, j]
                    if m != marker[i, j]:
                        marker[i, j] = m
                        changed = True
        return marker

    def fill_holes_numba(img: np.ndarray) -> np.ndarray:
        return _fill_holes_jit(np.ascontiguousarray(img))

    fill_holes = fill_holes_numba
else:
    fill_holes = fill_holes_numpy


# ---------------------------------------------------------------------------
# circular mean-intensity profiles for pupil localization

def circle_profiles_numpy(
    img: np.ndarray,
    center_rows: np.ndarray,
    center_cols: np.ndarray,
    radii: np.ndarray,
    sin_t: np.ndarray,
    cos_t: np.ndarray,
) -> np.ndarray:
    """Mean intensity along circles, bilinear sampled.

    Returns (n_centers, n_radii); entries where the circle does not fit
    inside the image are NaN.
    """
    hh, ww = img.shape
    flat = img.ravel()
    out = np.full((center_rows.size, radii.size), np.nan)
    for ri, r in enumerate(radii):
        ok = (
            (center_rows - r >= 0.0)
            & (center_rows + r <= hh - 1)
            & (center_cols - r >= 0.0)
            & (center_cols + r <= ww - 1)
        )
        if not np.any(ok):
            continue
        ys = center_rows[ok, None] + r * sin_t[None, :]
        xs = center_cols[ok, None] + r * cos_t[None, :]
        y0 = np.floor(ys).astype(np.int64)
        x0 = np.floor(xs).astype(np.int64)
        fy = ys - y0
        fx = xs - x0
        y1 = np.minimum(y0 + 1, hh - 1)
        x1 = np.minimum(x0 + 1, ww - 1)
        v = (
            flat[y0 * ww + x0] * (1.0 - fy) * (1.0 - fx)
            + flat[y0 * ww + x1] * (1.0 - fy) * fx
            + flat[y1 * ww + x0] * fy * (1.0 - fx)
            + flat[y1 * ww + x1] * fy * fx
        )
        out[ok, ri] = v.mean(axis=1)
    return out


if HAS_NUMBA:

    @numba.njit(cache=True, nogil=True, parallel=True)
    def _circle_profiles_jit(img, center_rows, center_cols, radii, sin_t, cos_t):
        hh, ww = img.shape
        n_c = center_rows.shape[0]
        n_r = radii.shape[0]
        n_a = sin_t.shape[0]
        out = np.full((n_c, n_r), np.nan)
        for ci in numba.prange(n_c):
            cy = center_rows[ci]
            cx = center_cols[ci]
            for ri in range(n_r):
                r = radii[ri]
                if cy - r < 0.0 or cy + r > hh - 1 or cx - r < 0.0 or cx + r > ww - 1:
                    continue
                s = 0.0
                for a in range(n_a):
                    y = cy + r * sin_t[a]
                    x = cx + r * cos_t[a]
                    y0 = int(math.floor(y))
                    x0 = int(math.floor(x))
                    fy = y - y0
                    fx = x - x0
                    y1 = y0 + 1
                    x1 = x0 + 1
                    if y1 > hh - 1:
                        y1 = hh - 1
                    if x1 > ww - 1:
                        x1 = ww - 1
                    s += (
                        img[y0, x0] * (1.0 - fy) * (1.0 - fx)
                        + img[y0, x1] * (1.0 - fy) * fx
                        + img[y1, x0] * fy * (1.0 - fx)
                        + img[y1, x1] * fy * fx
                    )
                out[ci, ri] = s / n_a
        return out

    def circle_profiles_numba(img, center_rows, center_cols, radii, sin_t, cos_t):
        return _circle_profiles_jit(
            np.ascontiguousarray(img), center_rows, center_cols, radii, sin_t, cos_t
        )

    circle_profiles = circle_profiles_numba
else:
    circle_profiles = circle_profiles_numpy
