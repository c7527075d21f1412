"""Iterative refinement with explicit warping around any flow estimator."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import ConfigInvalid, DimensionMismatch, DisplacementField, FaultflowError, Raster, check_same_shape
from .warp import warp_image

Estimator = Callable[[Raster, Raster], DisplacementField]


class EstimatorFailure(FaultflowError, RuntimeError):
    def __init__(self, iteration, message):
        super().__init__(f"estimator failed at iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass(frozen=True)
class RefinementConfig:
    n: int = 3
    gamma: float = 0.8

    def __post_init__(self):
        if not 1 <= self.n <= 8:
            raise ConfigInvalid(f"n must lie in [1, 8], got {self.n}")
        if not 0 < self.gamma <= 1:
            raise ConfigInvalid(f"gamma must lie in (0, 1], got {self.gamma}")


@dataclass(frozen=True)
class RefinementTrace:
    fields: tuple[DisplacementField, ...]
    deltas: tuple[DisplacementField, ...]

    def __post_init__(self):
        if len(self.fields) != len(self.deltas) or not self.fields:
            raise ValueError("trace needs matching, non-empty fields and deltas")

    @property
    def final(self) -> DisplacementField:
        return self.fields[-1]

    def __len__(self):
        return len(self.fields)


def iterative_refine(I1: Raster, I2: Raster, estimator: Estimator, cfg: RefinementConfig = RefinementConfig()):
    """Run ``cfg.n`` warp-and-re-estimate passes starting from a zero field.

    Pass i warps I1 by the running field ``df_{i-1}`` so that the estimator
    only sees the residual motion, then accumulates
    ``df_i = df_{i-1} + delta_i``. The first pass is exactly
    ``estimator(I1, I2)``.
    """
    shape = check_same_shape(I1, I2)
    cur = DisplacementField.zeros(*shape)
    fields, deltas = [], []
    for i in range(1, cfg.n + 1):
        ref = I1 if i == 1 else warp_image(I1, cur).warped
        try:
            delta = estimator(ref, I2)
        except Exception as exc:
            raise EstimatorFailure(i, str(exc)) from exc
        if not isinstance(delta, DisplacementField) or delta.shape != shape:
            raise EstimatorFailure(i, "estimator returned a field of the wrong shape")
        cur = delta if i == 1 else cur + delta
        fields.append(cur)
        deltas.append(delta)
    return RefinementTrace(tuple(fields), tuple(deltas))


def mean_l1(est: DisplacementField, gt: DisplacementField) -> float:
    check_same_shape(est, gt)
    return float(0.5 * (np.mean(np.abs(gt.u - est.u)) + np.mean(np.abs(gt.v - est.v))))


def intermediate_loss(trace: RefinementTrace, gt: DisplacementField, gamma: float):
    """Attenuated sum of per-iteration mean L1 errors.

    ``total = sum_i gamma**(n - i) * per_iteration[i]``, so later iterates
    weigh more when ``gamma < 1``.
    """
    for f in trace.fields:
        if f.shape != gt.shape:
            raise DimensionMismatch(f"trace field {f.shape} vs ground truth {gt.shape}")
    per = [mean_l1(f, gt) for f in trace.fields]
    n = len(per)
    total = float(sum(gamma ** (n - i) * p for i, p in enumerate(per, start=1)))
    return total, per
