"""Exact small-QP solver by active-set enumeration.

Every subset ``S`` of constraint rows (up to ``n`` rows, larger sets give a
singular equality system) is treated as the active set: the equality KKT
system

    [ G    -A_S' ] [x    ]   [ -c  ]
    [ A_S   0    ] [lam_S] = [ b_S ]

is solved and the candidate kept if it is primal feasible with nonnegative
multipliers. The cheapest surviving candidate is returned, ties going to the
lexicographically smallest active set.
"""

from __future__ import annotations

import dataclasses
import itertools
import logging

import numpy as np

from .qp import InvalidArgumentError, QpProblem

logger = logging.getLogger(__name__)

MAX_CONSTRAINTS = 16
FEAS_TOL = 1e-10
COND_LIMIT = 1e13


class UnsupportedSizeError(InvalidArgumentError):
    pass


class InfeasibleError(RuntimeError):
    pass


@dataclasses.dataclass(frozen=True)
class OracleSolution:
    x: np.ndarray
    lam: np.ndarray
    active_set: tuple[int, ...]
    objective: float
    unique: bool


def _null_space_pd(G: np.ndarray, A_S: np.ndarray) -> bool:
    if A_S.shape[0] == 0:
        Z = np.eye(G.shape[0])
    else:
        _, s, vt = np.linalg.svd(A_S)
        rank = int(np.sum(s > 1e-12 * max(1.0, s[0])))
        Z = vt[rank:].T
    if Z.shape[1] == 0:
        return True
    eig = np.linalg.eigvalsh(Z.T @ G @ Z)
    return bool(eig[0] > 1e-12 * max(1.0, np.max(np.abs(eig))))


def solve_oracle(p: QpProblem) -> OracleSolution:
    n, m = p.n, p.m
    if m > MAX_CONSTRAINTS:
        raise UnsupportedSizeError(
            f"active-set enumeration supports m <= {MAX_CONSTRAINTS}, got m = {m}"
        )
    G, A, b, c = p.G, p.A, p.b, p.c
    # rounding in the equality solves scales with the unconstrained minimizer
    x_free = np.linalg.lstsq(G, -c, rcond=None)[0]
    magnitude = 1.0 + float(np.max(np.abs(b))) + float(np.max(np.abs(A @ x_free)))
    feas_tol = FEAS_TOL * magnitude
    best = None
    for size in range(min(n, m) + 1):
        for S in itertools.combinations(range(m), size):
            A_S = A[list(S)]
            K = np.zeros((n + size, n + size))
            K[:n, :n] = G
            K[:n, n:] = -A_S.T
            K[n:, :n] = A_S
            if np.linalg.cond(K) > COND_LIMIT:
                if not _null_space_pd(G, A_S):
                    logger.debug("skipping active set %s: G not PD on its null space", S)
                continue
            sol = np.linalg.solve(K, np.concatenate([-c, b[list(S)]]))
            x, lam_S = sol[:n], sol[n:]
            if size and np.any(lam_S < -FEAS_TOL * (1.0 + np.max(np.abs(lam_S)))):
                continue
            if np.any(A @ x - b < -feas_tol):
                continue
            obj = p.objective(x)
            if (
                best is None
                or obj < best[0] - 1e-12 * (1.0 + abs(best[0]))
                or (obj <= best[0] + 1e-12 * (1.0 + abs(best[0])) and S < best[1])
            ):
                lam = np.zeros(m)
                lam[list(S)] = np.maximum(lam_S, 0.0)
                best = (obj, S, x, lam)
    if best is None:
        raise InfeasibleError("no feasible KKT point among the enumerated active sets")
    obj, S, x, lam = best
    unique = bool(np.linalg.eigvalsh(G)[0] > 1e-10 * max(1.0, np.max(np.abs(G))))
    return OracleSolution(x=x, lam=lam, active_set=tuple(S), objective=obj, unique=unique)
