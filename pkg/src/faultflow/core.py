"""Value types shared across the package.

Grids are stored as C-ordered (row-major) 2D numpy arrays, so element
(row r, col c) sits at flat index ``r * width + c``. Displacements are in
pixels and follow one convention everywhere: the field maps pixel (x, y) of
the second image to (x + u, y + v) in the first image, with x the column
axis and y the row axis.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class FaultflowError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(FaultflowError, ValueError):
    pass


class InvalidValue(FaultflowError, ValueError):
    pass


class OutOfRange(FaultflowError, ValueError):
    pass


class ConfigInvalid(FaultflowError, ValueError):
    pass


def _frozen_grid(a, name, dtype=np.float64):
    arr = np.array(a, dtype=dtype, copy=True)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DimensionMismatch(f"{name} must be non-empty, got shape {arr.shape}")
    if dtype is not bool and not np.all(np.isfinite(arr)):
        raise InvalidValue(f"{name} contains non-finite values")
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Raster:
    """Grayscale intensity grid (nominally in [0, 1], never clamped)."""

    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen_grid(self.data, "raster"))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True, eq=False)
class DisplacementField:
    """Dense (u, v) displacement in pixels; u along columns, v along rows."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = _frozen_grid(self.u, "u")
        v = _frozen_grid(self.v, "v")
        if u.shape != v.shape:
            raise DimensionMismatch(f"u {u.shape} and v {v.shape} differ")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def zeros(cls, height, width):
        z = np.zeros((height, width))
        return cls(z, z)

    @classmethod
    def constant(cls, height, width, du, dv):
        return cls(np.full((height, width), float(du)), np.full((height, width), float(dv)))

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    def __add__(self, other: "DisplacementField") -> "DisplacementField":
        check_same_shape(self, other)
        return DisplacementField(self.u + other.u, self.v + other.v)

    def __sub__(self, other: "DisplacementField") -> "DisplacementField":
        check_same_shape(self, other)
        return DisplacementField(self.u - other.u, self.v - other.v)

    def __neg__(self) -> "DisplacementField":
        return DisplacementField(-self.u, -self.v)

    def scaled(self, alpha: float) -> "DisplacementField":
        return DisplacementField(alpha * self.u, alpha * self.v)


@dataclass(frozen=True, eq=False)
class RegionMask:
    bits: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bits", _frozen_grid(self.bits, "mask", dtype=bool))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def __invert__(self) -> "RegionMask":
        return RegionMask(~self.bits)

    def count(self) -> int:
        return int(self.bits.sum())


class RangeBucket(enum.Enum):
    VerySmall = "very_small"
    Small = "small"
    Medium = "medium"


MAX_MAGNITUDE = 15.0


def check_same_shape(*objs) -> tuple[int, int]:
    shapes = {o.shape for o in objs}
    if len(shapes) != 1:
        raise DimensionMismatch(f"dimension mismatch: {sorted(shapes)}")
    return shapes.pop()


def field_magnitude_max(df: DisplacementField) -> float:
    return float(np.max(np.hypot(df.u, df.v)))


def classify_range(df: DisplacementField) -> RangeBucket:
    """Bucket a pair by its largest displacement magnitude.

    Thresholds: < 1 px very small, [1, 5] small, (5, 15] medium.
    """
    m = field_magnitude_max(df)
    if m > MAX_MAGNITUDE:
        raise OutOfRange(f"max displacement {m:.3f} px exceeds {MAX_MAGNITUDE} px")
    if m < 1.0:
        return RangeBucket.VerySmall
    if m <= 5.0:
        return RangeBucket.Small
    return RangeBucket.Medium
