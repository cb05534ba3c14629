"""Mehrotra's predictor-corrector method for convex QP (baseline solver)."""

from __future__ import annotations

import logging
import time

import numpy as np

from . import kkt
from .qp import (
    IterPoint,
    NumericalFailure,
    QpProblem,
    SolveResult,
    SolverParams,
    Status,
    complementarity_measure,
    finite_point,
    inf_norm,
    is_converged,
    kkt_residuals,
)

logger = logging.getLogger(__name__)


def default_start(p: QpProblem) -> IterPoint:
    """``x = 0`` and ``y = lam = max(1, ||b||_inf) e``."""
    s = max(1.0, inf_norm(p.b))
    return IterPoint(np.zeros(p.n), np.full(p.m, s), np.full(p.m, s))


def affine_duality_gap(z: IterPoint, direction, alpha_aff: float) -> float:
    """Complementarity measure at ``(y, lam) + alpha_aff (dy_aff, dlam_aff)``."""
    _, dy, dlam = direction
    y = z.y + alpha_aff * dy
    lam = z.lam + alpha_aff * dlam
    return float(y @ lam) / z.y.size


def solve_mehrotra(
    p: QpProblem, params: SolverParams | None = None, z0: IterPoint | None = None
) -> SolveResult:
    params = params or SolverParams()
    z = default_start(p) if z0 is None else z0
    if not z.is_positive():
        raise ValueError("starting point needs y > 0 and lam > 0")
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
            mu = comp.sum() / p.m

            f = kkt.factor(p, z)
            aff = kkt.solve(f, (-r_dual, -r_prim, -comp))
            alpha_aff = kkt.max_step_nonneg(z.y, z.lam, aff[1], aff[2])
            mu_aff = affine_duality_gap(z, aff, alpha_aff)
            sigma = float(np.clip((mu_aff / mu) ** 3, 0.0, 1.0))

            r3 = -comp - aff[1] * aff[2] + sigma * mu
            d = kkt.solve(f, (-r_dual, -r_prim, r3))
            tau = params.tau_rule(mu)
            alpha = kkt.fraction_to_boundary(z.y, z.lam, d[1], d[2], tau)

            z = z.step(d, alpha)
            k += 1
            if not finite_point(z) or not z.is_positive():
                raise NumericalFailure(f"iterate lost strict positivity at iteration {k}")
            mu_new = complementarity_measure(z)
            if mu_new >= mu:
                logger.info("mu did not decrease at iteration %d (%.3e -> %.3e)", k, mu, mu_new)
            mu_history.append(mu_new)
            stats.append(
                {
                    "iter": k,
                    "mu": mu_new,
                    "mu_aff": mu_aff,
                    "sigma": sigma,
                    "tau": tau,
                    "alpha_aff": alpha_aff,
                    "alpha": alpha,
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
