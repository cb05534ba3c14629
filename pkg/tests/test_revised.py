import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcqp import (
    InvalidStartError,
    IterPoint,
    QpProblem,
    SolverParams,
    Status,
    in_neighborhood,
    solve_mehrotra,
    solve_oracle,
)
from pcqp.gpc import CarimaModel, GpcConfig, build_gpc_problem
from pcqp.revised import (
    XI_MIN,
    Branch,
    StepCurve,
    compute_t_and_xi,
    default_start,
    max_step_in_neighborhood,
    solve_revised,
)

from _qpgen import feasible_start_qp, random_qp


def z1(y, lam):
    return IterPoint(np.zeros(1), np.array(y, float), np.array(lam, float))


def direction(dy, dlam):
    return (np.zeros(1), np.array(dy, float), np.array(dlam, float))


def test_t_and_xi_examples():
    z = z1([1.0], [1.0])
    assert compute_t_and_xi(z, direction([-0.9], [0.5]), 0.1) == (0.0, 1.0)
    t, xi = compute_t_and_xi(z, direction([0.9], [0.5]), 0.1)
    assert t == pytest.approx(0.45)
    assert xi == pytest.approx(1.0 - 0.1 ** (1.0 / 3.0))
    assert xi == pytest.approx(0.535841, abs=1e-6)
    # 2 gamma t / (1 - gamma) = 1 gives xi = 0, floored
    t, xi = compute_t_and_xi(z, direction([1.5], [3.0]), 0.1)
    assert t == pytest.approx(4.5)
    assert xi == XI_MIN


def test_step_curve_origin_is_exact():
    z = z1([1.0, 2.0], [3.0, 4.0])
    c = StepCurve(z, (np.ones(1), np.array([0.1, 0.2]), np.array([0.3, 0.4])))
    assert c(0.0) is z
    np.testing.assert_allclose(c(0.5).y, [1.05, 2.1])


def test_neighborhood_step_examples():
    z = z1([1.0], [1.0])
    assert max_step_in_neighborhood(z, direction([0.0], [0.0]), 0.1) == 1.0
    a = max_step_in_neighborhood(z, direction([-2.0], [0.0]), 0.1)
    assert 0.5 - 1e-9 < a < 0.5
    z = z1([1.0, 1.0], [1.0, 1.0])
    a = max_step_in_neighborhood(z, direction([-1.0, 1.0], [0.0, 0.0]), 0.25)
    assert a == pytest.approx(0.75, abs=1e-6)


def grid_limit(z, d, gamma, tol=1e-12, points=200_001):
    """First grid point where the segment leaves the neighborhood (or 1+)."""
    a = np.linspace(0.0, 1.0, points)[:, None]
    y, lam = z.y + a * d[1], z.lam + a * d[2]
    prod = y * lam
    ok = (np.all(y > 0, axis=1) & np.all(lam > 0, axis=1)
          & (prod.min(axis=1) >= gamma * prod.mean(axis=1) - tol))
    bad = np.flatnonzero(~ok)
    return (a[bad[0], 0] if bad.size else 2.0), 1.0 / (points - 1)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 10))
def test_neighborhood_step_matches_grid_scan(seed, m):
    rng = np.random.default_rng(seed)
    gamma = 0.1
    y = rng.uniform(0.5, 2.0, m)
    lam = rng.uniform(0.5, 2.0, m)
    z = IterPoint(np.zeros(1), y, lam)
    d = (np.zeros(1), rng.standard_normal(m) * 2, rng.standard_normal(m) * 2)
    alpha = max_step_in_neighborhood(z, d, gamma)
    assert in_neighborhood(z.step(d, alpha), gamma, 1e-12)
    assert z.step(d, alpha).is_positive() or alpha == 0.0
    first_bad, h = grid_limit(z, d, gamma)
    if first_bad > 1.0:
        assert alpha == pytest.approx(1.0, abs=1e-9)
    else:
        assert first_bad - h - 1e-9 <= alpha < first_bad


def test_inactive_constraint():
    p = QpProblem(np.array([[2.0]]), np.array([-2.0]), np.array([[1.0]]), np.array([0.0]))
    res = solve_revised(p)
    assert res.status is Status.CONVERGED
    assert res.x[0] == pytest.approx(1.0, abs=1e-7)


def test_default_start_is_centered():
    p, _ = random_qp(3)
    z = default_start(p)
    prod = z.y * z.lam
    np.testing.assert_allclose(prod, prod[0])
    assert in_neighborhood(z, 0.1, 0.0)


def test_rejects_start_outside_neighborhood():
    p = QpProblem(np.eye(1), np.zeros(1), np.array([[1.0], [-1.0]]), np.array([-1.0, -1.0]))
    z = IterPoint(np.zeros(1), np.array([1.0, 1.0]), np.array([1.0, 1e-3]))
    with pytest.raises(InvalidStartError):
        solve_revised(p, z0=z)
    with pytest.raises(InvalidStartError):
        solve_revised(p, z0=IterPoint(np.zeros(1), np.array([1.0, 0.0]), np.ones(2)))


def test_gpc_qp_matches_oracle():
    model = CarimaModel([1, -0.8], [0.4, 0.6])
    cfg = GpcConfig(N=3, Nu=3, eta=1.0, u_min=-0.5, u_max=1.0)
    prob = build_gpc_problem(model, cfg, np.zeros(2), np.zeros(1), 0.0, np.ones(3))
    res = solve_revised(prob.qp)
    assert res.converged
    np.testing.assert_allclose(res.x, solve_oracle(prob.qp).x, atol=1e-6)


def test_random_suite_converges_and_matches():
    for seed in range(100):
        p, _ = random_qp(seed)
        res = solve_revised(p)
        assert res.status is Status.CONVERGED, seed
        assert res.iterations <= 50
        o = solve_oracle(p)
        np.testing.assert_allclose(res.x, o.x, atol=1e-6)
        np.testing.assert_allclose(res.x, solve_mehrotra(p).x, atol=1e-6)


def test_iteration_invariants():
    params = SolverParams()
    for seed in range(100):
        p, _ = random_qp(seed)
        res = solve_revised(p, params)
        assert float(res.point.y @ res.point.lam) < params.eps
        for s in res.stats:
            mn, mu = s["centrality"]
            assert mn >= params.gamma * mu - 1e-12
            if s["early_exit"]:
                assert s["predicted"] <= params.eps
                continue
            assert s["alpha_a"] <= s["xi"] + 1e-15
            if s["branch"] == Branch.SAFEGUARD.value:
                assert s["alpha_c_before_safeguard"] < s["safeguard_threshold"]
                assert s["safeguard_threshold"] == pytest.approx(params.gamma / (math.sqrt(2) * p.n))
            if s["branch"] == Branch.SMALL_STEP.value:
                assert s["alpha_a"] < 0.1


def test_gap_strictly_decreases_from_feasible_starts():
    violations = []
    for seed in range(500):
        p, z0 = feasible_start_qp(10_000 + seed)
        res = solve_revised(p, z0=z0)
        assert res.converged, seed
        h = res.mu_history
        if any(b >= a for a, b in zip(h, h[1:])):
            violations.append(seed)
    assert violations == []


def test_max_iterations_status():
    p, _ = random_qp(7, n=6, m=10)
    res = solve_revised(p, SolverParams(max_iter=1))
    assert res.status is Status.MAX_ITERATIONS
