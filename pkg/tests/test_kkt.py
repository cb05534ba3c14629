import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcqp import InvalidArgumentError, IterPoint, NumericalFailure, QpProblem
from pcqp import kkt


def make(G, A, y, lam, c=None, b=None):
    G = np.atleast_2d(np.asarray(G, float))
    A = np.atleast_2d(np.asarray(A, float))
    n, m = G.shape[0], A.shape[0]
    p = QpProblem(G, np.zeros(n) if c is None else c, A, np.zeros(m) if b is None else b)
    return p, IterPoint(np.zeros(n), np.asarray(y, float), np.asarray(lam, float))


def full_matrix(p, z):
    n, m = p.n, p.m
    K = np.zeros((n + 2 * m, n + 2 * m))
    K[:n, :n] = p.G
    K[:n, n + m:] = -p.A.T
    K[n:n + m, :n] = p.A
    K[n:n + m, n:n + m] = -np.eye(m)
    K[n + m:, n:n + m] = np.diag(z.lam)
    K[n + m:, n + m:] = np.diag(z.y)
    return K


def random_system(rng, n_max=10, m_max=20):
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    M = rng.standard_normal((n, n))
    p, z = make(M.T @ M + 1e-3 * np.eye(n), rng.standard_normal((m, n)),
                rng.uniform(0.01, 10, m), rng.uniform(0.01, 10, m))
    rhs = (rng.standard_normal(n), rng.standard_normal(m), rng.standard_normal(m))
    return p, z, rhs


def test_condensed_matrix_examples():
    p, z = make([[1]], [[1]], [1], [1])
    np.testing.assert_allclose(kkt.factor(p, z).matrix, [[2.0]])
    p, z = make([[0]], [[1], [-1]], [1, 1], [2, 2])
    np.testing.assert_allclose(kkt.factor(p, z).matrix, [[4.0]])
    G = np.array([[2.0, 0.5], [0.5, 1.0]])
    p, z = make(G, np.zeros((3, 2)), [1, 2, 3], [1, 1, 1])
    np.testing.assert_allclose(kkt.factor(p, z).matrix, G)


def test_solve_examples():
    p, z = make([[1]], [[1]], [1], [1])
    d = kkt.solve(kkt.factor(p, z), ([0.0], [0.0], [-1.0]))
    np.testing.assert_allclose(np.concatenate(d), [-0.5, -0.5, -0.5])

    d = kkt.solve(kkt.factor(p, z), ([0.0], [0.0], [0.0]))
    np.testing.assert_array_equal(np.concatenate(d), 0.0)

    p, z = make([[2]], [[1]], [2], [1])
    d = kkt.solve(kkt.factor(p, z), ([1.0], [0.0], [0.0]))
    np.testing.assert_allclose(np.concatenate(d), [0.4, 0.4, -0.2])


def test_solve_matches_dense_block_solve():
    rng = np.random.default_rng(11)
    for _ in range(1000):
        p, z, rhs = random_system(rng)
        f = kkt.factor(p, z)
        d = kkt.solve(f, rhs)
        for res, r in zip(kkt.block_residuals(f, d, rhs), rhs):
            assert np.max(np.abs(res)) <= 1e-9
        scale = 1.0 + max(np.max(np.abs(r)) for r in rhs)
        assert max(np.max(np.abs(r)) for r in kkt.block_residuals(f, d, rhs)) <= 1e-10 * scale
    # one spot comparison against an explicit dense solve of the block system
    p, z, rhs = random_system(np.random.default_rng(5), 4, 6)
    expected = np.linalg.solve(full_matrix(p, z), np.concatenate(rhs))
    np.testing.assert_allclose(np.concatenate(kkt.solve(kkt.factor(p, z), rhs)), expected,
                               rtol=1e-9, atol=1e-11)


def test_factorization_reuse_is_bitwise():
    rng = np.random.default_rng(2)
    p, z, rhs1 = random_system(rng)
    rhs2 = tuple(2.0 * r + 1.0 for r in rhs1)
    f = kkt.factor(p, z)
    a1, a2 = kkt.solve(f, rhs1), kkt.solve(f, rhs2)
    b1 = kkt.solve(kkt.factor(p, z), rhs1)
    b2 = kkt.solve(kkt.factor(p, z), rhs2)
    for u, v in zip(a1 + a2, b1 + b2):
        np.testing.assert_array_equal(u, v)


def test_solve_rejects_bad_rhs():
    p, z = make([[1]], [[1]], [1], [1])
    with pytest.raises(InvalidArgumentError):
        kkt.solve(kkt.factor(p, z), ([0.0, 1.0], [0.0], [0.0]))


def test_factor_regularizes_singular_matrix():
    p, z = make([[0.0, 0.0], [0.0, 0.0]], [[1.0, 0.0]], [1.0], [1.0])
    f = kkt.factor(p, z)
    assert f.shift > 0


def test_factor_fails_on_overflowing_scaling():
    p, z = make([[1]], [[1]], [1e-320], [1e300])
    with pytest.raises(NumericalFailure):
        kkt.factor(p, z)


def test_max_step_nonneg_examples():
    assert kkt.max_step_nonneg([1], [1], [-2], [1]) == pytest.approx(0.5)
    assert kkt.max_step_nonneg([1, 2], [3, 4], [0, 1], [2, 0]) == 1.0
    assert kkt.max_step_nonneg([1, 4], [2, 2], [-4, -1], [-1, -8]) == pytest.approx(0.25)


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_max_step_nonneg_is_maximal(data):
    m = data.draw(st.integers(1, 8))
    pos = st.lists(st.floats(1e-3, 10), min_size=m, max_size=m)
    any_ = st.lists(st.floats(-10, 10), min_size=m, max_size=m)
    y, lam = np.array(data.draw(pos)), np.array(data.draw(pos))
    dy, dlam = np.array(data.draw(any_)), np.array(data.draw(any_))
    a = kkt.max_step_nonneg(y, lam, dy, dlam)
    assert 0 < a <= 1
    assert np.all(y + a * dy >= -1e-14) and np.all(lam + a * dlam >= -1e-14)
    if a < 1:
        a2 = min(1.0, a * (1 + 1e-6))
        assert np.any(y + a2 * dy < 0) or np.any(lam + a2 * dlam < 0)


def test_fraction_to_boundary_examples():
    assert kkt.fraction_to_boundary([1], [1], [-1], [0], 0.9) == pytest.approx(0.9)
    assert kkt.fraction_to_boundary([1], [1], [1], [1], 0.5) == 1.0
    args = ([1, 4], [2, 2], [-4, -1], [-1, -8])
    assert kkt.fraction_to_boundary(*args, 1 - 1e-15) == pytest.approx(kkt.max_step_nonneg(*args))


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_fraction_to_boundary_keeps_margin(data):
    m = data.draw(st.integers(1, 6))
    pos = st.lists(st.floats(1e-3, 10), min_size=m, max_size=m)
    any_ = st.lists(st.floats(-10, 10), min_size=m, max_size=m)
    y, lam = np.array(data.draw(pos)), np.array(data.draw(pos))
    dy, dlam = np.array(data.draw(any_)), np.array(data.draw(any_))
    tau = data.draw(st.floats(0.5, 0.999))
    a = kkt.fraction_to_boundary(y, lam, dy, dlam, tau)
    assert np.all(y + a * dy >= (1 - tau) * y - 1e-12)
    assert np.all(lam + a * dlam >= (1 - tau) * lam - 1e-12)
    assert a <= kkt.max_step_nonneg(y, lam, dy, dlam)
