"""Dense sub-pixel displacement by ZNCC patch matching on an image pyramid.

Patches are centred on a regular grid of the second image and searched for
in the first image, so the returned offsets follow the package-wide
convention (pixel of I2 -> position in I1).
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numba
import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .core import ConfigInvalid, DisplacementField, FaultflowError, Raster, check_same_shape
from .warp import bilinear_grid


class OutOfBounds(FaultflowError, ValueError):
    pass


class ImageTooSmall(FaultflowError, ValueError):
    pass


class SubpixelMethod(enum.Enum):
    QuadraticFit3x3 = "quadratic_fit_3x3"
    NONE = "none"


@dataclass(frozen=True)
class EstimatorConfig:
    patch_radius: int = 8
    search_radius: int = 4
    grid_step: int = 4
    pyramid_levels: int = 3
    min_correlation: float = 0.5
    subpixel: SubpixelMethod = SubpixelMethod.QuadraticFit3x3

    def __post_init__(self):
        if isinstance(self.subpixel, str):
            object.__setattr__(self, "subpixel", SubpixelMethod(self.subpixel))
        if self.patch_radius < 2:
            raise ConfigInvalid("patch_radius must be >= 2")
        if self.search_radius < 1:
            raise ConfigInvalid("search_radius must be >= 1")
        if self.pyramid_levels < 1:
            raise ConfigInvalid("pyramid_levels must be >= 1")
        if self.grid_step < 1:
            raise ConfigInvalid("grid_step must be >= 1")
        if not -1.0 <= self.min_correlation <= 1.0:
            raise ConfigInvalid("min_correlation must lie in [-1, 1]")


@dataclass(frozen=True)
class CorrelationSurface:
    """ZNCC scores over integer offsets; ``scores[dy + r, dx + r]``."""

    scores: np.ndarray

    @property
    def side(self) -> int:
        return self.scores.shape[0]


class PatchMatch(NamedTuple):
    offset: tuple[float, float]
    peak_score: float
    valid: bool
    on_border: bool


# match status codes from the grid kernel
VALID, LOW_SCORE, BORDER, NO_FIT = 0, 1, 2, 3

FLAT_STD = 1e-12


def zncc(a, b) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape or a.size < 4:
        raise ValueError("zncc needs two equal-size patches of >= 4 pixels")
    da = a - a.mean()
    db = b - b.mean()
    sa = np.sqrt(np.mean(da * da))
    sb = np.sqrt(np.mean(db * db))
    if sa < FLAT_STD or sb < FLAT_STD:
        return 0.0
    return float(np.mean(da * db) / (sa * sb))


@numba.njit(cache=True)
def _zncc_at(Ia, xa, ya, Ib, xb, yb, pr):
    # ZNCC of the Ia patch centred at (xa, ya) and the Ib patch at (xb, yb);
    # symmetric in its two patches bit for bit.
    side = 2 * pr + 1
    n = side * side
    ma = 0.0
    mb = 0.0
    for j in range(side):
        for i in range(side):
            ma += Ia[ya - pr + j, xa - pr + i]
            mb += Ib[yb - pr + j, xb - pr + i]
    ma /= n
    mb /= n
    va = 0.0
    vb = 0.0
    cov = 0.0
    for j in range(side):
        for i in range(side):
            da = Ia[ya - pr + j, xa - pr + i] - ma
            db = Ib[yb - pr + j, xb - pr + i] - mb
            va += da * da
            vb += db * db
            cov += da * db
    sa = np.sqrt(va / n)
    sb = np.sqrt(vb / n)
    if sa < 1e-12 or sb < 1e-12:
        return 0.0
    return (cov / n) / (sa * sb)


@numba.njit(cache=True)
def _surface(I1, I2, cx, cy, ox, oy, pr, sr, out):
    # Score the I2 patch at (cx, cy) against I1 patches at (cx+ox+dx, cy+oy+dy).
    for dy in range(-sr, sr + 1):
        for dx in range(-sr, sr + 1):
            out[dy + sr, dx + sr] = _zncc_at(I2, cx, cy, I1, cx + ox + dx, cy + oy + dy, pr)


@numba.njit(cache=True)
def _argmax(S, sr):
    # Ties go to the smallest offset magnitude, then to row-major order.
    best = -np.inf
    bmag = 0
    by = 0
    bx = 0
    for dy in range(-sr, sr + 1):
        for dx in range(-sr, sr + 1):
            s = S[dy + sr, dx + sr]
            mag = dx * dx + dy * dy
            if s > best or (s == best and mag < bmag):
                best = s
                bmag = mag
                by = dy
                bx = dx
    return bx, by, best


@numba.njit(cache=True)
def _parabola(sm, s0, sp):
    den = sm - 2.0 * s0 + sp
    if den >= 0.0:
        return 0.0
    d = (sm - sp) / (2.0 * den)
    return min(0.5, max(-0.5, d))


@numba.njit(cache=True)
def _refine_peak(I1, I2, cx, cy, ox, oy, pr, sr, S, bx, by):
    # Separable parabolic fits on the forward surface and on the reverse
    # surface (I1 patch fixed at the peak, I2 patch moved); averaging the
    # two cancels the bias of a one-sided moving window.
    iy = by + sr
    ix = bx + sr
    s0 = S[iy, ix]
    x1 = cx + ox + bx
    y1 = cy + oy + by
    fx = 0.0
    fy = 0.0
    if 0 < ix < 2 * sr:
        fwd = _parabola(S[iy, ix - 1], s0, S[iy, ix + 1])
        rm = _zncc_at(I2, cx - 1, cy, I1, x1, y1, pr)
        rp = _zncc_at(I2, cx + 1, cy, I1, x1, y1, pr)
        fx = 0.5 * (fwd - _parabola(rm, s0, rp))
    if 0 < iy < 2 * sr:
        fwd = _parabola(S[iy - 1, ix], s0, S[iy + 1, ix])
        rm = _zncc_at(I2, cx, cy - 1, I1, x1, y1, pr)
        rp = _zncc_at(I2, cx, cy + 1, I1, x1, y1, pr)
        fy = 0.5 * (fwd - _parabola(rm, s0, rp))
    return fx, fy


@numba.njit(cache=True, parallel=True)
def _match_grid(I1, I2, cx, cy, px, py, pr, sr, min_corr, subpixel, off_x, off_y, score, status):
    h, w = I2.shape
    m = pr + sr
    for g in numba.prange(cx.shape[0]):
        x = cx[g]
        y = cy[g]
        ox = px[g]
        oy = py[g]
        # one extra pixel of I2 margin for the reverse fit
        fits = (
            x - pr - 1 >= 0 and x + pr + 1 <= w - 1 and y - pr - 1 >= 0 and y + pr + 1 <= h - 1
            and x + ox - m >= 0 and x + ox + m <= w - 1
            and y + oy - m >= 0 and y + oy + m <= h - 1
        )
        if not fits:
            off_x[g] = 0.0
            off_y[g] = 0.0
            score[g] = 0.0
            status[g] = 3
            continue
        S = np.empty((2 * sr + 1, 2 * sr + 1))
        _surface(I1, I2, x, y, ox, oy, pr, sr, S)
        bx, by, best = _argmax(S, sr)
        on_border = abs(bx) == sr or abs(by) == sr
        fx = 0.0
        fy = 0.0
        # a saturated peak is not a local maximum, so no sub-pixel fit
        if subpixel and not on_border:
            fx, fy = _refine_peak(I1, I2, x, y, ox, oy, pr, sr, S, bx, by)
        off_x[g] = ox + bx + fx
        off_y[g] = oy + by + fy
        score[g] = best
        if best < min_corr:
            status[g] = 1
        elif on_border:
            status[g] = 2
        else:
            status[g] = 0


def _window_fits(shape, center, cfg):
    h, w = shape
    x, y = center
    m = cfg.patch_radius + cfg.search_radius
    return m <= x <= w - 1 - m and m <= y <= h - 1 - m


def correlation_surface(I1: Raster, I2: Raster, center, cfg: EstimatorConfig = EstimatorConfig()):
    check_same_shape(I1, I2)
    if not _window_fits(I1.shape, center, cfg):
        raise OutOfBounds(f"search window around {center} does not fit the rasters")
    r = cfg.search_radius
    S = np.empty((2 * r + 1, 2 * r + 1))
    _surface(I1.data, I2.data, int(center[0]), int(center[1]), 0, 0, cfg.patch_radius, r, S)
    return CorrelationSurface(S)


def match_patch(I1: Raster, I2: Raster, center, cfg: EstimatorConfig = EstimatorConfig()) -> PatchMatch:
    """Match the I2 patch at ``center = (x, y)`` inside a search window of I1.

    ``valid`` is False when the peak score is below ``min_correlation`` or the
    peak sits on the border of the search window.
    """
    surf = correlation_surface(I1, I2, center, cfg)
    r = cfg.search_radius
    bx, by, best = _argmax(surf.scores, r)
    border = abs(bx) == r or abs(by) == r
    fx = fy = 0.0
    if cfg.subpixel is SubpixelMethod.QuadraticFit3x3 and not border:
        x, y = int(center[0]), int(center[1])
        fx, fy = _refine_peak(I1.data, I2.data, x, y, 0, 0, cfg.patch_radius, r, surf.scores, bx, by)
    valid = best >= cfg.min_correlation and not border
    return PatchMatch((float(bx + fx), float(by + fy)), float(best), bool(valid), bool(border))


# ---------------------------------------------------------------------------
# dense estimation


def downsample2(a):
    h, w = a.shape[0] // 2, a.shape[1] // 2
    return a[: 2 * h, : 2 * w].reshape(h, 2, w, 2).mean(axis=(1, 3))


def build_pyramid(a, levels):
    pyr = [np.asarray(a, dtype=np.float64)]
    for _ in range(levels - 1):
        pyr.append(downsample2(pyr[-1]))
    return pyr


def upsample_flow(u, v, shape):
    """Resample a coarse-level field onto the next finer level, doubling it."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    xs = (xx - 0.5) / 2.0
    ys = (yy - 0.5) / 2.0
    uu, _ = bilinear_grid(u, xs, ys)
    vv, _ = bilinear_grid(v, xs, ys)
    return 2.0 * uu, 2.0 * vv


def grid_axis(n, step):
    ax = np.arange(0, n, step)
    if ax[-1] != n - 1:
        ax = np.append(ax, n - 1)
    return ax


def fill_holes(values, valid):
    """Fill invalid grid cells with the median of their valid 8-neighbours.

    Repeats until every cell is filled; a grid with no valid cell is zero.
    """
    values = np.array(values, dtype=np.float64)
    valid = np.array(valid, dtype=bool)
    if not valid.any():
        return np.zeros_like(values)
    h, w = valid.shape
    while not valid.all():
        vals = np.where(valid, values, np.nan)
        pad = np.pad(vals, 1, constant_values=np.nan)
        stack = np.stack(
            [pad[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
             for dy in (-1, 0, 1) for dx in (-1, 0, 1) if dy or dx]
        )
        has = np.any(np.isfinite(stack), axis=0)
        todo = ~valid & has
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            med = np.nanmedian(stack[:, todo], axis=0)
        values[todo] = med
        valid = valid | todo
    return values


def _match_level(I1, I2, pred_u, pred_v, cfg):
    h, w = I1.shape
    ys = grid_axis(h, cfg.grid_step)
    xs = grid_axis(w, cfg.grid_step)
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    cx = gx.ravel().astype(np.int64)
    cy = gy.ravel().astype(np.int64)
    px = np.rint(pred_u[cy, cx]).astype(np.int64)
    py = np.rint(pred_v[cy, cx]).astype(np.int64)
    n = cx.size
    off_x = np.empty(n)
    off_y = np.empty(n)
    score = np.empty(n)
    status = np.empty(n, dtype=np.int64)
    _match_grid(
        I1, I2, cx, cy, px, py, cfg.patch_radius, cfg.search_radius, cfg.min_correlation,
        cfg.subpixel is SubpixelMethod.QuadraticFit3x3, off_x, off_y, score, status,
    )
    # saturated (border) peaks keep their integer step so that warm-started
    # passes can travel beyond one search radius
    usable = ((status == VALID) | (status == BORDER)).reshape(gx.shape)
    gu = fill_holes(off_x.reshape(gx.shape), usable)
    gv = fill_holes(off_y.reshape(gx.shape), usable)
    return ys, xs, gu, gv


def _densify(ys, xs, grid, shape):
    h, w = shape
    if len(ys) == 1 or len(xs) == 1:
        return np.full(shape, float(np.mean(grid)))
    interp = RegularGridInterpolator((ys, xs), grid, method="linear")
    yy, xx = np.mgrid[0:h, 0:w]
    return interp(np.stack([yy.ravel(), xx.ravel()], axis=-1)).reshape(shape)


def estimate_flow(I1: Raster, I2: Raster, cfg: EstimatorConfig = EstimatorConfig()) -> DisplacementField:
    """Coarse-to-fine dense displacement from I2 to I1."""
    h, w = check_same_shape(I1, I2)
    need = 4 * cfg.patch_radius
    if h < need or w < need:
        raise ImageTooSmall(f"rasters must be at least {need} x {need}, got {h} x {w}")
    min_side = 2 * (cfg.patch_radius + cfg.search_radius) + 1
    levels = 1
    while levels < cfg.pyramid_levels and min(h, w) // 2 ** levels >= min_side:
        levels += 1
    pyr1 = build_pyramid(I1.data, levels)
    pyr2 = build_pyramid(I2.data, levels)

    u = v = None
    for lvl in range(levels - 1, -1, -1):
        a1, a2 = pyr1[lvl], pyr2[lvl]
        if u is None:
            pu = np.zeros(a1.shape)
            pv = np.zeros(a1.shape)
        else:
            pu, pv = upsample_flow(u, v, a1.shape)
        ys, xs, gu, gv = _match_level(a1, a2, pu, pv, cfg)
        u = _densify(ys, xs, gu, a1.shape)
        v = _densify(ys, xs, gv, a1.shape)
    return DisplacementField(u, v)


def make_estimator(cfg: EstimatorConfig = EstimatorConfig()):
    def estimator(I1, I2):
        return estimate_flow(I1, I2, cfg)

    estimator.__name__ = "zncc_pyramid"
    return estimator
