"""A-posteriori denoising of displacement fields.

Every objective here uses the un-halved data term

    ||u - y||^2 + penalty(u)

so a TV weight ``w`` on an edge corresponds to a taut-string tube of
half-width ``w / 2`` in the usual ``0.5 ||u - y||^2`` formulation.

Penalties:

* ``L2Grad``: ``lam * ||grad u||^2``, solved exactly (1D) or by alternating
  tridiagonal line sweeps (2D).
* ``TV``: ``lam * sum |grad u|``, 1D by taut string, 2D by a Dykstra-like
  splitting over rows and columns.
* ``LTV``: ``lam * sum log(|grad u| + eps)``, by reweighted-L1 where each
  pass is a weighted TV problem anchored to the original noisy data.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.linalg import solve_banded

from .core import ConfigInvalid, DisplacementField, FaultflowError


class TooShort(FaultflowError, ValueError):
    pass


class LengthMismatch(FaultflowError, ValueError):
    pass


class PenaltyKind(enum.Enum):
    L2Grad = "l2grad"
    TV = "tv"
    LTV = "ltv"


@dataclass(frozen=True)
class PenaltySpec:
    kind: PenaltyKind = PenaltyKind.LTV
    epsilon: float = 1e-2

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", PenaltyKind(self.kind))
        if self.kind is PenaltyKind.LTV and not self.epsilon > 0:
            raise ConfigInvalid(f"LTV epsilon must be > 0, got {self.epsilon}")


@dataclass(frozen=True)
class RegularizerConfig:
    penalty: PenaltySpec = field(default_factory=PenaltySpec)
    lam: float = field(default=0.001, metadata={"key": "lambda"})
    k: int = 3
    dykstra_iters: int = 50
    dykstra_tol: float = 1e-6

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ConfigInvalid(f"lambda must be finite and >= 0, got {self.lam}")
        if self.k < 0:
            raise ConfigInvalid(f"k must be >= 0, got {self.k}")
        if self.dykstra_iters < 1:
            raise ConfigInvalid(f"dykstra_iters must be >= 1, got {self.dykstra_iters}")
        if not self.dykstra_tol > 0:
            raise ConfigInvalid(f"dykstra_tol must be > 0, got {self.dykstra_tol}")


@dataclass(frozen=True)
class DykstraReport:
    iterations: int
    converged: bool
    last_change: float


# ---------------------------------------------------------------------------
# 1D operators


def grad1d(u):
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 1 or u.size < 2:
        raise TooShort("grad1d needs a 1D sequence of length >= 2")
    return u[1:] - u[:-1]


def l2grad_denoise_1d(y, lam):
    """Exact minimizer of ``||u - y||^2 + lam ||grad u||^2``.

    Solves ``(I + lam L) u = y`` with ``L`` the path-graph Laplacian.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.size < 2:
        raise TooShort("l2grad_denoise_1d needs length >= 2")
    if lam == 0:
        return y.copy()
    # the Laplacian kills constants: solving for the offset from y[0] keeps
    # constant inputs exact
    return y[0] + solve_banded((1, 1), _path_system(y.size, lam, 0.0), y - y[0])


def _path_system(n, lam, extra_diag):
    # banded storage of I + lam*L + extra_diag*I for a path of length n
    ab = np.zeros((3, n))
    deg = np.full(n, 2.0)
    deg[0] = deg[-1] = 1.0
    ab[0, 1:] = -lam
    ab[1] = 1.0 + lam * deg + extra_diag
    ab[2, :-1] = -lam
    return ab


@numba.njit(cache=True)
def _taut_string(y, hw, out):
    # Shortest path through the tube [cumsum(y) - hw, cumsum(y) + hw] with
    # pinned endpoints; its slopes are the prox of 0.5||u-y||^2 + sum hw|Du|.
    n = y.shape[0]
    if n == 1:
        out[0] = y[0]
        return
    all_zero = True
    for i in range(n - 1):
        if hw[i] != 0.0:
            all_zero = False
            break
    if all_zero:
        for i in range(n):
            out[i] = y[i]
        return
    r = np.empty(n + 1)
    r[0] = 0.0
    for i in range(n):
        r[i + 1] = r[i] + y[i]
    lo = r.copy()
    hi = r.copy()
    for i in range(1, n):
        lo[i] -= hw[i - 1]
        hi[i] += hw[i - 1]

    x0 = 0
    s0 = 0.0
    while x0 < n:
        smax = np.inf
        smin = -np.inf
        jmax = x0
        jmin = x0
        bent = False
        k = x0 + 1
        while k <= n:
            d = k - x0
            a = (lo[k] - s0) / d
            b = (hi[k] - s0) / d
            if a > smax:
                for i in range(x0, jmax):
                    out[i] = smax
                s0 = hi[jmax]
                x0 = jmax
                bent = True
                break
            if b < smin:
                for i in range(x0, jmin):
                    out[i] = smin
                s0 = lo[jmin]
                x0 = jmin
                bent = True
                break
            if b <= smax:
                smax = b
                jmax = k
            if a >= smin:
                smin = a
                jmin = k
            k += 1
        if not bent:
            slope = (r[n] - s0) / (n - x0)
            for i in range(x0, n):
                out[i] = slope
            x0 = n


@numba.njit(cache=True, parallel=True)
def _prox_rows(Y, HW, out):
    for i in numba.prange(Y.shape[0]):
        _taut_string(Y[i], HW[i], out[i])


def weighted_tv1d_prox(y, w):
    """Exact minimizer of ``||u - y||^2 + sum_i w[i] |u[i+1] - u[i]|``."""
    y = np.ascontiguousarray(y, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    if y.ndim != 1 or w.ndim != 1 or w.size != max(y.size - 1, 0):
        raise LengthMismatch(f"need len(w) == len(y) - 1, got {w.size} and {y.size}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("edge weights must be finite and non-negative")
    out = np.empty_like(y)
    if y.size:
        _taut_string(y, 0.5 * w, out)
    return out


def tv1d_prox(y, lam):
    """Exact minimizer of ``||u - y||^2 + lam * sum |u[i+1] - u[i]|``."""
    y = np.asarray(y, dtype=np.float64)
    if lam < 0:
        raise ValueError("lam must be >= 0")
    return weighted_tv1d_prox(y, np.full(max(y.size - 1, 0), float(lam)))


def tv_dual_certificate(y, u, w):
    """Dual variables and the worst KKT violation for a weighted TV prox.

    The optimality conditions are ``2(u - y) + D^T z = 0`` with
    ``|z[i]| <= w[i]`` and ``z[i] = w[i] sign(u[i+1] - u[i])`` on jumps.
    ``z`` is recovered from running sums of ``u - y``.
    """
    y = np.asarray(y, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    s = 2.0 * np.cumsum(u - y)
    z = s[:-1]
    viol = abs(s[-1])
    if z.size:
        viol = max(viol, float(np.max(np.maximum(np.abs(z) - w, 0.0))))
        du = np.diff(u)
        jump = np.abs(du) > 1e-9 * max(1.0, float(np.max(np.abs(u))))
        if np.any(jump):
            viol = max(viol, float(np.max(np.abs(z[jump] - w[jump] * np.sign(du[jump])))))
    return z, viol


# ---------------------------------------------------------------------------
# 2D operators


def _edge_weights(shape, weights):
    h, w = shape
    if np.isscalar(weights):
        lam = float(weights)
        return np.full((h, w - 1), lam), np.full((h - 1, w), lam)
    wh, wv = weights
    wh = np.asarray(wh, dtype=np.float64)
    wv = np.asarray(wv, dtype=np.float64)
    if wh.shape != (h, w - 1) or wv.shape != (h - 1, w):
        raise LengthMismatch(
            f"edge weights must have shapes {(h, w - 1)} and {(h - 1, w)}, "
            f"got {wh.shape} and {wv.shape}"
        )
    return wh, wv


def prox_rows(x, wh):
    x = np.ascontiguousarray(x, dtype=np.float64)
    out = np.empty_like(x)
    _prox_rows(x, np.ascontiguousarray(0.5 * wh), out)
    return out


def prox_cols(x, wv):
    return prox_rows(x.T, wv.T).T


def denoise_2d(y, weights, max_iter=50, tol=1e-6, return_info=False):
    """Approximate minimizer of ``||u - y||^2 + TV_rows(u) + TV_cols(u)``.

    Parameters
    ----------
    y : ndarray (H, W)
    weights : float or (ndarray (H, W-1), ndarray (H-1, W))
        Uniform weight, or per-edge weights for horizontal and vertical edges.
    max_iter, tol :
        Sweep cap and stopping threshold on the max-norm change between
        successive iterates.
    return_info : bool
        Also return a :class:`DykstraReport`. Hitting ``max_iter`` is not an
        error; the report carries ``converged=False``.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] < 2 or y.shape[1] < 2:
        raise TooShort("denoise_2d needs an H x W grid with H, W >= 2")
    wh, wv = _edge_weights(y.shape, weights)
    if np.any(wh < 0) or np.any(wv < 0):
        raise ValueError("edge weights must be non-negative")

    z = y.copy()
    p = np.zeros_like(y)
    q = np.zeros_like(y)
    change = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        u = prox_rows(z + p, wh)
        p = z + p - u
        z_new = prox_cols(u + q, wv)
        q = u + q - z_new
        change = float(np.max(np.abs(z_new - z)))
        z = z_new
        if change < tol:
            break
    if return_info:
        return z, DykstraReport(it, change < tol, change)
    return z


def tv_objective_2d(u, y, weights):
    wh, wv = _edge_weights(np.shape(y), weights)
    return float(
        np.sum((u - y) ** 2)
        + np.sum(wh * np.abs(np.diff(u, axis=1)))
        + np.sum(wv * np.abs(np.diff(u, axis=0)))
    )


def l2grad_denoise_2d(y, lam, tol=1e-6, max_sweeps=10_000):
    """Minimizer of ``||u - y||^2 + lam ||grad u||^2`` on a 2D grid.

    Alternates exact tridiagonal solves along rows and along columns (block
    Jacobi on the normal equations) until the max-norm update is below
    ``tol``.
    """
    y = np.asarray(y, dtype=np.float64)
    if lam == 0:
        return y.copy()
    base = y.flat[0]
    r = y - base
    u = r.copy()
    for _ in range(max_sweeps):
        prev = u
        u = _line_sweep(u, r, lam)
        u = _line_sweep(u.T, r.T, lam).T
        if np.max(np.abs(u - prev)) < tol:
            break
    return base + u


def _line_sweep(u, y, lam):
    # Solve each row exactly with vertical couplings taken from u.
    h, w = u.shape
    nb = np.zeros_like(u)
    deg = np.zeros(h)
    if h > 1:
        nb[1:] += u[:-1]
        nb[:-1] += u[1:]
        deg[1:] += 1
        deg[:-1] += 1
    rhs = y + lam * nb
    out = np.empty_like(u)
    for d in np.unique(deg):
        rows = deg == d
        if w == 1:
            out[rows] = rhs[rows] / (1.0 + lam * d)
        else:
            out[rows] = solve_banded((1, 1), _path_system(w, lam, lam * d), rhs[rows].T).T
    return out


# ---------------------------------------------------------------------------
# Log-TV by reweighted L1


def ltv_objective(u, y, lam, eps):
    """``||u - y||^2 + lam * sum_edges log(|grad u| + eps)`` over both axes."""
    return float(
        np.sum((u - y) ** 2)
        + lam * np.sum(np.log(np.abs(np.diff(u, axis=1)) + eps))
        + lam * np.sum(np.log(np.abs(np.diff(u, axis=0)) + eps))
    )


def ltv_weights(u, lam, eps):
    """Per-axis L1 weights from linearizing the log penalty at ``u``."""
    return (
        lam / (np.abs(np.diff(u, axis=1)) + eps),
        lam / (np.abs(np.diff(u, axis=0)) + eps),
    )


def ltv_denoise_component(y, lam, eps, k, dykstra_iters=50, dykstra_tol=1e-6, history=False):
    """Reweighted-L1 passes for one scalar component.

    Each pass re-linearizes at the previous iterate and solves a weighted TV
    problem whose data term stays anchored to ``y``. With ``history=True``
    returns the list ``[y, u_1, ..., u_k]``.
    """
    y = np.asarray(y, dtype=np.float64)
    iterates = [y]
    cur = y
    if lam > 0 and min(y.shape) >= 2:
        for _ in range(k):
            weights = ltv_weights(cur, lam, eps)
            cur = denoise_2d(y, weights, max_iter=dykstra_iters, tol=dykstra_tol)
            iterates.append(cur)
    return iterates if history else cur


def _check_kind(cfg, kind):
    if cfg.penalty.kind is not kind:
        raise ConfigInvalid(f"expected penalty {kind.value}, got {cfg.penalty.kind.value}")


def ltv_denoise(field: DisplacementField, cfg: RegularizerConfig) -> DisplacementField:
    _check_kind(cfg, PenaltyKind.LTV)
    if cfg.lam == 0 or cfg.k == 0:
        return field
    comps = [
        ltv_denoise_component(c, cfg.lam, cfg.penalty.epsilon, cfg.k, cfg.dykstra_iters, cfg.dykstra_tol)
        for c in (field.u, field.v)
    ]
    return DisplacementField(*comps)


def regularize_field(field: DisplacementField, cfg: RegularizerConfig) -> DisplacementField:
    if not isinstance(cfg, RegularizerConfig):
        raise ConfigInvalid("cfg must be a RegularizerConfig")
    if cfg.lam == 0:
        return field
    kind = cfg.penalty.kind
    if kind is PenaltyKind.LTV:
        return ltv_denoise(field, cfg)
    if min(field.shape) < 2:
        return field
    if kind is PenaltyKind.TV:
        comps = [
            denoise_2d(c, cfg.lam, max_iter=cfg.dykstra_iters, tol=cfg.dykstra_tol)
            for c in (field.u, field.v)
        ]
    else:
        comps = [l2grad_denoise_2d(c, cfg.lam) for c in (field.u, field.v)]
    return DisplacementField(*comps)
