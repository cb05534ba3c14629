"""Newton system for the primal-dual predictor and corrector steps.

Every direction in both solvers solves the block system::

    [ G   0  -A' ] [dx  ]   [r1]
    [ A  -I   0  ] [dy  ] = [r2]
    [ 0  Lam  Y  ] [dlam]   [r3]

Eliminating ``dlam = Y^{-1}(r3 - Lam dy)`` and ``dy = A dx - r2`` leaves the
n-by-n symmetric positive definite system

    (G + A' Y^{-1} Lam A) dx = r1 + A' Y^{-1} (r3 + Lam r2)

which is factored once per iterate and reused for every right-hand side.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.linalg

from .qp import InvalidArgumentError, IterPoint, NumericalFailure, QpProblem

REGULARIZATION_SHIFTS = (1e-12, 1e-10, 1e-8)


@dataclasses.dataclass(frozen=True)
class NewtonFactorization:
    """Cholesky factor of the condensed matrix at one iterate."""

    problem: QpProblem
    y: np.ndarray
    lam: np.ndarray
    matrix: np.ndarray
    cho: tuple
    shift: float = 0.0

    @property
    def n(self) -> int:
        return self.problem.n

    @property
    def m(self) -> int:
        return self.problem.m


def condensed_matrix(p: QpProblem, y, lam) -> np.ndarray:
    with np.errstate(over="ignore"):
        d = np.asarray(lam) / np.asarray(y)
    M = p.G + p.A.T @ (d[:, None] * p.A)
    return 0.5 * (M + M.T)


def factor(p: QpProblem, z: IterPoint) -> NewtonFactorization:
    if z.y.size != p.m or z.x.size != p.n:
        raise InvalidArgumentError("iterate does not match problem dimensions")
    if not (np.all(z.y > 0) and np.all(z.lam > 0)):
        raise InvalidArgumentError("factor needs strictly positive y and lam")
    M = condensed_matrix(p, z.y, z.lam)
    if not np.all(np.isfinite(M)):
        raise NumericalFailure("condensed Newton matrix has non-finite entries")
    for shift in (0.0,) + REGULARIZATION_SHIFTS:
        try:
            cho = scipy.linalg.cho_factor(
                M + shift * np.eye(p.n), lower=True, check_finite=False
            )
        except np.linalg.LinAlgError:
            continue
        # cho_factor does not always flag a zero pivot
        if np.all(np.diag(cho[0]) > 0):
            return NewtonFactorization(p, z.y.copy(), z.lam.copy(), M, cho, shift)
    raise NumericalFailure("condensed Newton matrix is singular after regularization")


def _condensed_solve(f: NewtonFactorization, r1, r2, r3):
    A = f.problem.A
    dx = scipy.linalg.cho_solve(f.cho, r1 + A.T @ ((r3 + f.lam * r2) / f.y), check_finite=False)
    dy = A @ dx - r2
    dlam = (r3 - f.lam * dy) / f.y
    return dx, dy, dlam


def block_residuals(f: NewtonFactorization, direction, rhs):
    """Residual of each block row of the full system for a candidate direction."""
    p = f.problem
    dx, dy, dlam = direction
    r1, r2, r3 = rhs
    return (
        r1 - (p.G @ dx - p.A.T @ dlam),
        r2 - (p.A @ dx - dy),
        r3 - (f.lam * dy + f.y * dlam),
    )


def solve(f: NewtonFactorization, rhs):
    """Solve the block system for ``(dx, dy, dlam)`` given ``rhs = (r1, r2, r3)``.

    One step of iterative refinement against the full block system is applied,
    which recovers accuracy lost to the ``Y^{-1} Lam`` scaling near convergence.
    """
    r1, r2, r3 = (np.asarray(r, dtype=float) for r in rhs)
    if r1.shape != (f.n,) or r2.shape != (f.m,) or r3.shape != (f.m,):
        raise InvalidArgumentError(
            f"rhs shapes {r1.shape}, {r2.shape}, {r3.shape} do not match (n, m) = ({f.n}, {f.m})"
        )
    d = _condensed_solve(f, r1, r2, r3)
    e1, e2, e3 = block_residuals(f, d, (r1, r2, r3))
    c = _condensed_solve(f, e1, e2, e3)
    return d[0] + c[0], d[1] + c[1], d[2] + c[2]


def max_step_nonneg(y, lam, dy, dlam) -> float:
    """Largest ``alpha`` in (0, 1] keeping ``y + alpha dy`` and ``lam + alpha dlam`` nonnegative."""
    v = np.concatenate([np.asarray(y, float), np.asarray(lam, float)])
    dv = np.concatenate([np.asarray(dy, float), np.asarray(dlam, float)])
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    with np.errstate(over="ignore"):
        return float(min(1.0, np.min(-v[neg] / dv[neg])))


def fraction_to_boundary(y, lam, dy, dlam, tau: float) -> float:
    """``min(alpha_pri, alpha_dual)`` with each side keeping ``v + alpha dv >= (1 - tau) v``."""

    def side(v, dv):
        v = np.asarray(v, float)
        dv = np.asarray(dv, float)
        neg = dv < 0
        if not np.any(neg):
            return 1.0
        with np.errstate(over="ignore"):
            return float(min(1.0, np.min(-tau * v[neg] / dv[neg])))

    return min(side(y, dy), side(lam, dlam))
