import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from faultflow.core import ConfigInvalid, DisplacementField
from faultflow.regularize import (
    LengthMismatch,
    PenaltyKind,
    PenaltySpec,
    RegularizerConfig,
    TooShort,
    denoise_2d,
    grad1d,
    l2grad_denoise_1d,
    l2grad_denoise_2d,
    ltv_denoise,
    ltv_denoise_component,
    ltv_objective,
    ltv_weights,
    regularize_field,
    tv1d_prox,
    tv_dual_certificate,
    tv_objective_2d,
    weighted_tv1d_prox,
)
from oracles import l2grad_dense, tv1d_brute, tv1d_dual_pg

unit = st.floats(-1, 1, allow_nan=False)
signal = st.integers(1, 40).flatmap(lambda n: arrays(float, n, elements=unit))


def kkt_violation(y, u, w):
    """Independent KKT check: solve D^T z = -2(u - y) by least squares."""
    n = len(y)
    if n == 1:
        return abs(u[0] - y[0])
    D = np.diff(np.eye(n), axis=0)
    z, *_ = np.linalg.lstsq(D.T, -2.0 * (u - y), rcond=None)
    viol = np.max(np.abs(D.T @ z + 2.0 * (u - y)))
    viol = max(viol, np.max(np.maximum(np.abs(z) - w, 0)))
    du = np.diff(u)
    jump = np.abs(du) > 1e-9
    if jump.any():
        viol = max(viol, np.max(np.abs(z[jump] - w[jump] * np.sign(du[jump]))))
    return viol


# ---------------------------------------------------------------- grad1d


def test_grad1d_examples():
    assert np.array_equal(grad1d([1, 1, 1]), [0, 0])
    assert np.array_equal(grad1d([0, 1, 3]), [1, 2])


@given(arrays(float, 6, elements=unit))
def test_grad1d_matches_subtraction(u):
    want = [u[i + 1] - u[i] for i in range(5)]
    assert np.array_equal(grad1d(u), want)


def test_grad1d_too_short():
    with pytest.raises(TooShort):
        grad1d([1.0])


# ---------------------------------------------------------------- L2 gradient


def test_l2grad_identities():
    y = np.full(7, 0.3)
    assert np.array_equal(l2grad_denoise_1d(y, 5.0), y)
    z = np.random.default_rng(0).random(7)
    assert np.array_equal(l2grad_denoise_1d(z, 0.0), z)


def test_l2grad_two_point_closed_form():
    u = l2grad_denoise_1d([0.0, 1.0], 0.25)
    assert np.allclose(u, [1 / 6, 5 / 6], atol=1e-9)
    A = np.array([[1.25, -0.25], [-0.25, 1.25]])
    assert np.max(np.abs(A @ u - [0, 1])) <= 1e-9


@given(st.integers(2, 30).flatmap(lambda n: arrays(float, n, elements=unit)), st.floats(0, 10))
def test_l2grad_matches_dense_solve(y, lam):
    u = l2grad_denoise_1d(y, lam)
    assert np.allclose(u, l2grad_dense(y, lam), atol=1e-9)


def test_l2grad_too_short():
    with pytest.raises(TooShort):
        l2grad_denoise_1d([1.0], 0.1)


def test_l2grad_2d_solves_normal_equations():
    rng = np.random.default_rng(1)
    y = rng.random((9, 7))
    lam = 0.7
    u = l2grad_denoise_2d(y, lam, tol=1e-12)
    lap = np.zeros_like(u)
    dh = np.diff(u, axis=1)
    dv = np.diff(u, axis=0)
    lap[:, :-1] -= dh
    lap[:, 1:] += dh
    lap[:-1, :] -= dv
    lap[1:, :] += dv
    assert np.max(np.abs(u + lam * lap - y)) <= 1e-9


# ---------------------------------------------------------------- TV, 1D


def test_tv_identities():
    y = np.full(5, -0.2)
    assert np.array_equal(tv1d_prox(y, 0.4), y)
    z = np.random.default_rng(2).random(9)
    assert np.array_equal(tv1d_prox(z, 0.0), z)


def test_tv_two_point_closed_form():
    assert np.allclose(tv1d_prox([0.0, 1.0], 0.25), [0.125, 0.875], atol=1e-9)


def test_tv_three_point_brute_force():
    y = np.array([0.1, 0.9, 0.2])
    grid = np.linspace(0.0, 1.0, 201)
    want = tv1d_brute(y, 0.3, grid)
    assert np.allclose(tv1d_prox(y, 0.3), want, atol=0.005)


@given(signal, st.sampled_from([0.0, 0.01, 0.1, 0.5, 2.0]))
def test_tv_kkt_certificate(y, lam):
    u = tv1d_prox(y, lam)
    w = np.full(len(y) - 1, lam)
    assert kkt_violation(y, u, w) <= 1e-8
    _, viol = tv_dual_certificate(y, u, w)
    assert viol <= 1e-8


@given(st.integers(2, 12).flatmap(lambda n: arrays(float, n, elements=unit)), st.floats(0.0, 0.6))
@settings(max_examples=40)
def test_tv_matches_dual_oracle(y, lam):
    w = np.full(len(y) - 1, lam)
    assert np.allclose(tv1d_prox(y, lam), tv1d_dual_pg(y, w, 200_000), atol=1e-6)


@given(st.integers(2, 30).flatmap(lambda n: st.tuples(arrays(float, n, elements=unit), arrays(float, n, elements=unit))),
       st.floats(0, 1))
def test_tv_prox_is_non_expansive(pair, lam):
    a, b = pair
    d = np.linalg.norm(tv1d_prox(a, lam) - tv1d_prox(b, lam))
    assert d <= np.linalg.norm(a - b) + 1e-12


def test_weighted_zero_weights_is_identity():
    y = np.random.default_rng(3).random(8)
    assert np.array_equal(weighted_tv1d_prox(y, np.zeros(7)), y)


@given(signal, st.floats(0, 1))
def test_weighted_uniform_reduces_to_plain(y, lam):
    w = np.full(len(y) - 1, lam)
    assert np.allclose(weighted_tv1d_prox(y, w), tv1d_prox(y, lam), atol=1e-9, rtol=0)


@given(arrays(float, 5, elements=unit), arrays(float, 4, elements=st.floats(0, 0.5)))
@settings(max_examples=40)
def test_weighted_matches_dual_oracle(y, w):
    assert np.allclose(weighted_tv1d_prox(y, w), tv1d_dual_pg(y, w, 200_000), atol=1e-4)


@given(st.integers(2, 40).flatmap(lambda n: st.tuples(arrays(float, n, elements=unit),
                                                      arrays(float, n - 1, elements=st.floats(0, 2)))))
def test_weighted_kkt_certificate(yw):
    y, w = yw
    assert kkt_violation(y, weighted_tv1d_prox(y, w), w) <= 1e-8


def test_weighted_length_mismatch():
    with pytest.raises(LengthMismatch):
        weighted_tv1d_prox(np.zeros(4), np.zeros(4))
    with pytest.raises(ValueError):
        weighted_tv1d_prox(np.zeros(4), np.array([0.1, -0.1, 0.1]))


def test_single_sample_is_identity():
    assert np.array_equal(tv1d_prox([0.7], 3.0), [0.7])


# ---------------------------------------------------------------- TV, 2D


def test_denoise_2d_separable_case():
    row = np.random.default_rng(4).uniform(-1, 1, 10)
    y = np.tile(row, (6, 1))
    u = denoise_2d(y, 0.2)
    want = tv1d_prox(row, 0.2)
    assert np.allclose(u, np.tile(want, (6, 1)), atol=1e-6)


def test_denoise_2d_zero_weight_single_sweep():
    y = np.random.default_rng(5).random((5, 6))
    assert np.array_equal(denoise_2d(y, 0.0, max_iter=1), y)


def test_denoise_2d_report():
    y = np.random.default_rng(6).random((8, 8))
    _, rep = denoise_2d(y, 0.1, max_iter=2, tol=1e-15, return_info=True)
    assert rep.iterations == 2 and not rep.converged
    _, rep = denoise_2d(y, 0.1, max_iter=5000, return_info=True)
    assert rep.converged and rep.last_change < 1e-6


def test_denoise_2d_rejects_bad_input():
    with pytest.raises(TooShort):
        denoise_2d(np.zeros((1, 5)), 0.1)
    with pytest.raises(LengthMismatch):
        denoise_2d(np.zeros((4, 4)), (np.zeros((4, 4)), np.zeros((3, 4))))


@given(arrays(float, (6, 6), elements=unit), st.floats(0.01, 0.5))
@settings(max_examples=30)
def test_denoise_2d_beats_input_and_constant(y, lam):
    # the solution is no worse than two feasible candidates
    u = denoise_2d(y, lam, max_iter=5000, tol=1e-12)
    f = tv_objective_2d(u, y, lam)
    assert f <= tv_objective_2d(y, y, lam) + 1e-6
    assert f <= tv_objective_2d(np.full_like(y, y.mean()), y, lam) + 1e-6


# ---------------------------------------------------------------- LTV


def test_ltv_identities():
    df = DisplacementField(*np.random.default_rng(7).random((2, 6, 6)))
    assert ltv_denoise(df, RegularizerConfig(lam=0.0)) is df
    assert ltv_denoise(df, RegularizerConfig(k=0)) is df


def test_ltv_needs_ltv_penalty():
    df = DisplacementField.zeros(4, 4)
    with pytest.raises(ConfigInvalid):
        ltv_denoise(df, RegularizerConfig(penalty=PenaltySpec(PenaltyKind.TV)))


def test_ltv_epsilon_must_be_positive():
    with pytest.raises(ConfigInvalid):
        PenaltySpec(PenaltyKind.LTV, epsilon=0.0)


@given(arrays(float, (8, 8), elements=unit), st.sampled_from([0.001, 0.01, 0.1]), st.sampled_from([1e-2, 1e-1]))
@settings(max_examples=25)
def test_ltv_majorize_minimize(y, lam, eps):
    tol = 1e-8
    its = ltv_denoise_component(y, lam, eps, 4, dykstra_iters=2000, dykstra_tol=tol, history=True)
    slack = 10 * tol * y.size
    for prev, cur in zip(its, its[1:]):
        w = ltv_weights(prev, lam, eps)
        # surrogate at the new iterate is no larger than at the old one
        assert tv_objective_2d(cur, y, w) <= tv_objective_2d(prev, y, w) + slack
        assert ltv_objective(cur, y, lam, eps) <= ltv_objective(prev, y, lam, eps) + slack


def test_ltv_weights_formula():
    u = np.array([[0.0, 0.5, 0.5], [1.0, 1.0, 0.0]])
    wh, wv = ltv_weights(u, 0.1, 0.01)
    assert np.allclose(wh, 0.1 / (np.abs(np.diff(u, axis=1)) + 0.01))
    assert np.allclose(wv, 0.1 / (np.abs(np.diff(u, axis=0)) + 0.01))


# ---------------------------------------------------------------- dispatch


@pytest.mark.parametrize("kind", list(PenaltyKind))
def test_zero_lambda_is_identity(kind):
    df = DisplacementField(*np.random.default_rng(8).random((2, 5, 5)))
    out = regularize_field(df, RegularizerConfig(penalty=PenaltySpec(kind), lam=0.0))
    assert np.array_equal(out.u, df.u) and np.array_equal(out.v, df.v)


def test_tv_dispatch_matches_denoise_2d():
    df = DisplacementField(*np.random.default_rng(9).random((2, 7, 6)))
    cfg = RegularizerConfig(penalty=PenaltySpec(PenaltyKind.TV), lam=0.01, k=7)
    out = regularize_field(df, cfg)
    assert np.array_equal(out.u, denoise_2d(df.u, 0.01))
    assert np.array_equal(out.v, denoise_2d(df.v, 0.01))


def test_l2_dispatch_matches_2d_solver():
    df = DisplacementField(*np.random.default_rng(10).random((2, 7, 6)))
    out = regularize_field(df, RegularizerConfig(penalty=PenaltySpec(PenaltyKind.L2Grad), lam=0.1))
    assert np.allclose(out.u, l2grad_denoise_2d(df.u, 0.1), atol=1e-6)


def _median_jump(u, col):
    return float(np.median(u[:, col] - u[:, col - 1]))


def test_ltv_keeps_step_that_tv_shrinks():
    rng = np.random.default_rng(11)
    h, w, col = 64, 64, 32
    clean = np.where(np.arange(w) >= col, 1.0, 0.0)[None, :].repeat(h, 0)
    noisy = clean + rng.normal(0, 0.05, (h, w))
    df = DisplacementField(noisy, np.zeros((h, w)))
    ltv = regularize_field(df, RegularizerConfig(lam=0.001))
    tv = regularize_field(df, RegularizerConfig(penalty=PenaltySpec(PenaltyKind.TV), lam=0.01))
    j_ltv = _median_jump(ltv.u, col)
    j_tv = _median_jump(tv.u, col)
    assert abs(j_ltv - 1.0) <= 0.1
    assert abs(j_tv - 1.0) > abs(j_ltv - 1.0)


@pytest.mark.parametrize("kind", list(PenaltyKind))
def test_data_fidelity_grows_with_lambda(kind):
    y = np.random.default_rng(12).normal(0, 0.1, (24, 24))
    df = DisplacementField(y, y.T.copy())
    lams = [1e-4, 1e-3, 1e-2, 1e-1, 1.0]
    dist = []
    for lam in lams:
        out = regularize_field(df, RegularizerConfig(penalty=PenaltySpec(kind), lam=lam, dykstra_iters=500, dykstra_tol=1e-9))
        dist.append(np.linalg.norm(out.u - df.u) + np.linalg.norm(out.v - df.v))
    assert all(b >= a - 1e-9 for a, b in zip(dist, dist[1:]))


def test_config_validation():
    with pytest.raises(ConfigInvalid):
        RegularizerConfig(lam=-1.0)
    with pytest.raises(ConfigInvalid):
        RegularizerConfig(k=-1)
    with pytest.raises(ConfigInvalid):
        RegularizerConfig(dykstra_iters=0)
    with pytest.raises(ConfigInvalid):
        RegularizerConfig(dykstra_tol=0.0)
