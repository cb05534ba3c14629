"""Safeguarded predictor-corrector method for convex QP.

Each iteration takes an affine-scaling predictor, caps its step length by a
bound derived from the second-order term of the predicted complementarity,
and then chooses among three corrector right-hand sides:

* ``LARGE_STEP`` when the (capped) predictor step is at least 0.1,
* ``SMALL_STEP`` when it is shorter, damping the second-order term,
* ``SAFEGUARD`` when the corrector's admissible step collapses below
  ``gamma / (sqrt(2) n)``; it recenters toward ``beta / (1 - beta)`` times the
  current complementarity.

The corrector step is the largest one keeping the iterate inside the wide
neighborhood ``y_i lam_i >= gamma * mu`` of the central path.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import math
import time

import numpy as np

from . import kkt
from .qp import (
    InvalidStartError,
    IterPoint,
    NumericalFailure,
    QpProblem,
    SolveResult,
    SolverParams,
    Status,
    complementarity_measure,
    finite_point,
    in_neighborhood,
    inf_norm,
    is_converged,
    kkt_residuals,
)

logger = logging.getLogger(__name__)

XI_MIN = 0.1
SMALL_STEP_THRESHOLD = 0.1
# alpha_a is kept this far inside the positivity boundary
PREDICTOR_SHRINK = 1.0 - 1e-8
# residual-to-gap ratio may grow at most this much over its starting value
RESIDUAL_RATIO_SLACK = 10.0


class Branch(enum.Enum):
    LARGE_STEP = "large_step"
    SMALL_STEP = "small_step"
    SAFEGUARD = "safeguard"
    CENTERING = "centering"


@dataclasses.dataclass(frozen=True)
class StepCurve:
    """The ray ``(x, y, lam) + alpha (dx, dy, dlam)``."""

    point: IterPoint
    direction: tuple

    def __call__(self, alpha: float) -> IterPoint:
        if alpha == 0.0:
            return self.point
        return self.point.step(self.direction, alpha)


@dataclasses.dataclass
class SafeguardState:
    alpha_a: float
    xi: float
    t: float
    capped: bool
    branch: Branch
    mu_target: float
    alpha_c: float
    alpha_c_before_safeguard: float | None = None


def compute_t_and_xi(z: IterPoint, aff, gamma: float):
    """Return ``(t, xi)`` for the affine direction ``aff``.

    ``t`` is the largest ratio ``dy_i dlam_i / (y_i lam_i)`` over rows where
    the affine product is positive (0 if there are none) and
    ``xi = 1 - (2 gamma t / (1 - gamma))^(1/3)``, clamped to ``[XI_MIN, 1]``.
    """
    _, dy, dlam = aff
    prod = dy * dlam
    pos = prod > 0
    if not np.any(pos):
        return 0.0, 1.0
    t = float(np.max(prod[pos] / (z.y[pos] * z.lam[pos])))
    xi = 1.0 - np.cbrt(2.0 * gamma * t / (1.0 - gamma))
    return t, float(min(1.0, max(XI_MIN, xi)))


def _quadratic_roots(a, b, c):
    """Real roots of ``a + b s + c s^2`` for each row (NaN where absent)."""
    a, b, c = (np.asarray(v, dtype=float) for v in (a, b, c))
    r1 = np.full(a.shape, np.nan)
    r2 = np.full(a.shape, np.nan)
    scale = np.maximum(np.abs(b), np.sqrt(np.abs(a * c)) + np.abs(c))
    quad = np.abs(c) > 1e-14 * np.maximum(scale, 1e-300)
    disc = b * b - 4.0 * a * c
    ok = quad & (disc >= 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    q = -0.5 * (b + np.where(b >= 0, 1.0, -1.0) * sq)
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = np.where(ok, q / c, r1)
        r2 = np.where(ok & (q != 0), a / q, r2)
        lin = ~quad & (b != 0)
        r1 = np.where(lin, -a / b, r1)
    return r1, r2


def _admissible(y, lam, gamma, tol) -> np.ndarray:
    """Row-wise admissibility of stacked points (shape ``(k, m)``)."""
    prod = y * lam
    mu = prod.mean(axis=1)
    return (
        np.all(y > 0, axis=1)
        & np.all(lam > 0, axis=1)
        & (prod.min(axis=1) >= gamma * mu - tol)
    )


def max_step_in_neighborhood(
    z: IterPoint,
    direction,
    gamma: float,
    tol: float = 1e-12,
    infeasibility: tuple[float, float] | None = None,
) -> float:
    """Largest ``alpha`` in [0, 1] such that the whole segment stays admissible.

    Admissible means strictly positive ``y, lam`` and
    ``y_i lam_i >= gamma * mu - tol``. With ``infeasibility = (rho, theta)``
    the point must also satisfy ``(1 - alpha) rho <= theta * mu(alpha)``,
    where ``rho`` is the current residual norm (residuals contract linearly
    along a Newton direction). This keeps the gap from vanishing ahead of
    feasibility on infeasible starts and is vacuous when ``rho = 0``.

    Each margin is a polynomial of degree at most two in ``alpha`` and each
    positivity bound linear, so their roots are the only places admissibility
    can change. The roots are sorted, every interval between consecutive
    roots is probed at its midpoint, and the first failing interval ends the
    admissible segment. The result is then nudged down until the endpoint
    itself passes the test.
    """
    _, dy, dlam = direction
    y, lam = z.y, z.lam
    m = y.size
    # y_i(a) lam_i(a) = p0 + p1 a + p2 a^2
    p0 = y * lam
    p1 = y * dlam + lam * dy
    p2 = dy * dlam
    h0 = p0 - gamma * p0.sum() / m + tol
    h1 = p1 - gamma * p1.sum() / m
    h2 = p2 - gamma * p2.sum() / m

    cands = [0.0, 1.0]
    for r in _quadratic_roots(h0, h1, h2):
        cands.extend(r[np.isfinite(r)].tolist())
    rho, theta = infeasibility if infeasibility else (0.0, np.inf)
    gap_check = rho > 0.0 and np.isfinite(theta)
    if gap_check:
        g = _quadratic_roots(
            np.array([theta * p0.sum() / m - rho]),
            np.array([theta * p1.sum() / m + rho]),
            np.array([theta * p2.sum() / m]),
        )
        for r in g:
            cands.extend(r[np.isfinite(r)].tolist())
    with np.errstate(divide="ignore", invalid="ignore"):
        for v, dv in ((y, dy), (lam, dlam)):
            neg = dv < 0
            cands.extend((-v[neg] / dv[neg]).tolist())
    pts = np.unique(np.clip(np.asarray(cands), 0.0, 1.0))

    curve = StepCurve(z, direction)

    def ok_at(alphas):
        alphas = np.asarray(alphas)[:, None]
        yy, ll = y + alphas * dy, lam + alphas * dlam
        ok = _admissible(yy, ll, gamma, tol)
        if gap_check:
            a = alphas[:, 0]
            ok &= (1.0 - a) * rho <= theta * (yy * ll).mean(axis=1)
        return ok

    if not ok_at([0.0])[0]:
        return 0.0
    alpha = 1.0
    if pts.size > 1:
        mids = 0.5 * (pts[:-1] + pts[1:])
        bad = np.flatnonzero(~ok_at(mids))
        if bad.size:
            alpha = float(pts[bad[0]])
    # roots carry rounding error; back off until the endpoint is admissible
    shrink = 1e-14
    for _ in range(80):
        zt = curve(alpha)
        if zt.is_positive() and in_neighborhood(zt, gamma, tol) and ok_at([alpha])[0]:
            return alpha
        alpha *= 1.0 - shrink
        shrink = min(10 * shrink, 0.5)
    return 0.0


def default_start(p: QpProblem) -> IterPoint:
    """Perfectly centered start at ``x = 0``.

    The slack is the constraint value ``-b`` lifted to at least 1 and each
    multiplier is ``kappa / y_i`` with ``kappa = max(1, ||c||_inf / m)``, so
    every product ``y_i lam_i`` equals ``kappa``.
    """
    y = np.maximum(-p.b, 1.0)
    kappa = max(1.0, inf_norm(p.c) / p.m)
    return IterPoint(np.zeros(p.n), y, kappa / y)


def solve_revised(
    p: QpProblem, params: SolverParams | None = None, z0: IterPoint | None = None
) -> SolveResult:
    """Run the safeguarded predictor-corrector method from ``z0``.

    Raises ``InvalidStartError`` if ``z0`` is not strictly positive or lies
    outside the neighborhood by more than ``params.neighborhood_tol``.
    """
    params = params or SolverParams()
    z = default_start(p) if z0 is None else z0
    gamma, beta, tol = params.gamma, params.beta, params.neighborhood_tol
    # steps aim inside half the slack so rounding cannot reach the boundary
    step_tol = 0.5 * tol
    if not z.is_positive():
        raise InvalidStartError("starting point needs y > 0 and lam > 0")
    if not in_neighborhood(z, gamma, tol):
        raise InvalidStartError(
            f"starting point is outside the gamma={gamma} neighborhood of the central path"
        )
    safeguard_threshold = gamma / (math.sqrt(2.0) * p.n)
    feas_floor = params.feas_tol * p.scale()
    r_dual, r_prim, comp = kkt_residuals(p, z)
    rho0 = max(inf_norm(r_dual), inf_norm(r_prim), feas_floor)
    theta = RESIDUAL_RATIO_SLACK * rho0 / (comp.sum() / p.m)

    t0 = time.perf_counter()
    mu_history = [complementarity_measure(z)]
    stats = []
    status = Status.MAX_ITERATIONS
    message = ""
    k = 0
    try:
        while True:
            if is_converged(p, z, params):
                status = Status.CONVERGED
                break
            if k >= params.max_iter:
                break
            r_dual, r_prim, comp = kkt_residuals(p, z)
            mu_g = comp.sum() / p.m
            rho = max(inf_norm(r_dual), inf_norm(r_prim))
            # residuals already within tolerance need no guarding
            infeasibility = None if rho <= feas_floor else (rho, max(theta, rho / mu_g))
            f = kkt.factor(p, z)

            # predictor
            aff = kkt.solve(f, (-r_dual, -r_prim, -comp))
            alpha_a = kkt.max_step_nonneg(z.y, z.lam, aff[1], aff[2]) * PREDICTOR_SHRINK
            trial = z.step(aff, alpha_a)
            predicted = (1.0 - alpha_a) * float(trial.y @ trial.lam)
            if (
                predicted <= params.eps
                and in_neighborhood(trial, gamma, step_tol)
                and is_converged(p, trial, params)
            ):
                z = trial
                k += 1
                mu_history.append(complementarity_measure(z))
                stats.append(
                    {"iter": k, "early_exit": True, "alpha_a": alpha_a, "predicted": predicted,
                     "mu": mu_history[-1], "centrality": _centrality(z)}
                )
                status = Status.CONVERGED
                break

            # corrector
            t, xi = compute_t_and_xi(z, aff, gamma)
            capped = alpha_a > xi
            if capped:
                alpha_a = xi
            second_order = aff[1] * aff[2]
            mu_target = (1.0 - alpha_a) ** 3 * mu_g
            if alpha_a >= SMALL_STEP_THRESHOLD:
                branch = Branch.LARGE_STEP
                r3 = -comp - second_order + mu_target
            else:
                branch = Branch.SMALL_STEP
                r3 = -comp - alpha_a * second_order + mu_target
            d = kkt.solve(f, (-r_dual, -r_prim, r3))
            alpha_c = max_step_in_neighborhood(z, d, gamma, step_tol, infeasibility)
            state = SafeguardState(alpha_a, xi, t, capped, branch, mu_target, alpha_c)

            if alpha_c < safeguard_threshold:
                state.alpha_c_before_safeguard = alpha_c
                mu_target = beta / (1.0 - beta) * mu_g
                r3 = -comp - alpha_a * second_order + mu_target
                d = kkt.solve(f, (-r_dual, -r_prim, r3))
                alpha_c = max_step_in_neighborhood(z, d, gamma, step_tol, infeasibility)
                state.branch = Branch.SAFEGUARD
                state.mu_target = mu_target
                state.alpha_c = alpha_c

            if alpha_c <= 0.0:
                # pure centering always has an admissible first-order step
                mu_target = mu_g
                d = kkt.solve(f, (-r_dual, -r_prim, -comp + mu_target))
                alpha_c = max_step_in_neighborhood(z, d, gamma, step_tol, infeasibility)
                state.branch = Branch.CENTERING
                state.mu_target = mu_target
                state.alpha_c = alpha_c
            if alpha_c <= 0.0:
                raise NumericalFailure(f"corrector step collapsed to zero at iteration {k + 1}")
            z = z.step(d, alpha_c)
            k += 1
            if not finite_point(z) or not z.is_positive():
                raise NumericalFailure(f"iterate lost strict positivity at iteration {k}")
            mu_history.append(complementarity_measure(z))
            stats.append(
                {
                    "iter": k,
                    "early_exit": False,
                    "alpha_a": state.alpha_a,
                    "xi": state.xi,
                    "t": state.t,
                    "capped": state.capped,
                    "branch": state.branch.value,
                    "mu_target": state.mu_target,
                    "alpha_c": state.alpha_c,
                    "alpha_c_before_safeguard": state.alpha_c_before_safeguard,
                    "safeguard_threshold": safeguard_threshold,
                    "mu": mu_history[-1],
                    "centrality": _centrality(z),
                }
            )
    except NumericalFailure as exc:
        status = Status.NUMERICAL_FAILURE
        message = str(exc)
    return SolveResult(
        point=z,
        status=status,
        iterations=k,
        mu_history=mu_history,
        wall_time=time.perf_counter() - t0,
        stats=stats,
        message=message,
    )


def _centrality(z: IterPoint) -> tuple[float, float]:
    """``(min_i y_i lam_i, mu)`` for post-hoc neighborhood audits."""
    prod = z.y * z.lam
    return float(prod.min()), float(prod.mean())
