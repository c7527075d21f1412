"""Endpoint error and gradient-energy smoothness, split by region."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import DisplacementField, FaultflowError, RegionMask, check_same_shape, classify_range


class EmptyMask(FaultflowError, ValueError):
    pass


@dataclass(frozen=True)
class MetricsReport:
    epe: float
    smoothness_near_fault: float | None
    smoothness_non_fault: float | None
    bucket: str
    n_near_fault: int
    n_non_fault: int
    estimator_name: str = ""
    regularizer_name: str = ""

    def as_dict(self):
        return asdict(self)


def epe(est: DisplacementField, gt: DisplacementField, mask: RegionMask | None = None) -> float:
    check_same_shape(est, gt)
    err = np.hypot(est.u - gt.u, est.v - gt.v)
    if mask is None:
        return float(err.mean())
    check_same_shape(est, mask)
    if not mask.bits.any():
        raise EmptyMask("epe mask selects no pixels")
    return float(err[mask.bits].mean())


def gradient_energy(df: DisplacementField):
    """Per-pixel squared forward-difference gradient, on the (H-1, W-1) interior."""
    e = np.zeros((df.height - 1, df.width - 1))
    for c in (df.u, df.v):
        e += np.diff(c, axis=1)[:-1, :] ** 2
        e += np.diff(c, axis=0)[:, :-1] ** 2
    return e


def smoothness(df: DisplacementField, mask: RegionMask) -> float:
    """Mean of ``ux^2 + uy^2 + vx^2 + vy^2`` over masked pixels.

    Pixels in the last row or column lack a forward neighbour and are left
    out.
    """
    check_same_shape(df, mask)
    sel = mask.bits[:-1, :-1]
    if not sel.any():
        raise EmptyMask("smoothness mask has no pixel with both forward neighbours")
    return float(gradient_energy(df)[sel].mean())


def _smoothness_or_none(df, mask):
    try:
        return smoothness(df, mask)
    except EmptyMask:
        return None


def evaluate_run(est, gt, near_fault: RegionMask, estimator_name="", regularizer_name="") -> MetricsReport:
    """Full report for one estimate.

    A region with no usable pixel (e.g. no fault at all in constant-shift
    mode) gets ``None`` for its smoothness instead of raising.
    """
    check_same_shape(est, gt, near_fault)
    non_fault = ~near_fault
    return MetricsReport(
        epe=epe(est, gt),
        smoothness_near_fault=_smoothness_or_none(est, near_fault),
        smoothness_non_fault=_smoothness_or_none(est, non_fault),
        bucket=classify_range(gt).value,
        n_near_fault=near_fault.count(),
        n_non_fault=non_fault.count(),
        estimator_name=estimator_name,
        regularizer_name=regularizer_name,
    )
