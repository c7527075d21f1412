"""Backward bilinear warping with clamp-to-edge sampling and a validity mask."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DisplacementField, Raster, RegionMask, check_same_shape


@dataclass(frozen=True)
class WarpResult:
    warped: Raster
    validity: RegionMask


def bilinear_grid(data, xs, ys):
    """Sample ``data`` at real coordinates (xs, ys), clamping to the edge.

    Returns ``(values, in_bounds)``; ``in_bounds`` is False wherever the
    requested coordinate fell outside ``[0, W-1] x [0, H-1]``.
    """
    data = np.asarray(data, dtype=np.float64)
    h, w = data.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    inb = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)
    xc = np.clip(xs, 0, w - 1)
    yc = np.clip(ys, 0, h - 1)
    x0 = np.minimum(np.floor(xc).astype(np.intp), max(w - 2, 0))
    y0 = np.minimum(np.floor(yc).astype(np.intp), max(h - 2, 0))
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xc - x0
    fy = yc - y0
    top = (1.0 - fx) * data[y0, x0] + fx * data[y0, x1]
    bot = (1.0 - fx) * data[y1, x0] + fx * data[y1, x1]
    return (1.0 - fy) * top + fy * bot, inb


def bilinear_sample(img: Raster, x: float, y: float) -> tuple[float, bool]:
    val, inb = bilinear_grid(img.data, np.float64(x), np.float64(y))
    return float(val), bool(inb)


def warp_array(data, u, v):
    """Backward-warp a 2D array: ``out(x, y) = data(x + u, y + v)``."""
    h, w = data.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return bilinear_grid(data, xx + u, yy + v)


def warp_image(img: Raster, df: DisplacementField) -> WarpResult:
    check_same_shape(img, df)
    out, inb = warp_array(img.data, df.u, df.v)
    return WarpResult(Raster(out), RegionMask(inb))
