"""QP data, primal-dual iterates and the optimality measures shared by the solvers.

Problems are stated as::

    minimize    1/2 x^T G x + c^T x
    subject to  A x >= b

with slack ``y = A x - b`` and multipliers ``lam`` for the inequality rows.
"""

from __future__ import annotations

import dataclasses
import enum
import json
from typing import Any, Callable

import numpy as np

PSD_TOL = 1e-10
NEIGHBORHOOD_TOL = 1e-12


class InvalidArgumentError(ValueError):
    """Raised on dimension mismatches and malformed inputs."""


class InvalidStartError(ValueError):
    """Raised when a starting point violates a solver's entry requirements."""


class NumericalFailure(RuntimeError):
    """Raised when a Newton system cannot be factored or iterates lose positivity."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclasses.dataclass(frozen=True)
class QpProblem:
    """Convex QP ``min 1/2 x'Gx + c'x  s.t.  Ax >= b``.

    ``G`` is symmetrized on construction and checked to be positive
    semidefinite (smallest eigenvalue at least ``-PSD_TOL`` relative to the
    largest magnitude eigenvalue).
    """

    G: np.ndarray
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        G = np.atleast_2d(np.array(self.G, dtype=float))
        c = np.atleast_1d(np.array(self.c, dtype=float)).ravel()
        A = np.array(self.A, dtype=float)
        b = np.atleast_1d(np.array(self.b, dtype=float)).ravel()
        n = c.size
        if A.ndim == 1:
            A = A.reshape(-1, n) if n else A.reshape(0, 0)
        if n < 1:
            raise InvalidArgumentError("need at least one variable (n >= 1)")
        if G.shape != (n, n):
            raise InvalidArgumentError(f"G has shape {G.shape}, expected ({n}, {n})")
        if A.ndim != 2 or A.shape[1] != n:
            raise InvalidArgumentError(f"A has shape {A.shape}, expected (m, {n})")
        if A.shape[0] < 1:
            raise InvalidArgumentError("need at least one constraint (m >= 1)")
        if b.size != A.shape[0]:
            raise InvalidArgumentError(f"b has length {b.size}, expected {A.shape[0]}")
        for name, arr in (("G", G), ("c", c), ("A", A), ("b", b)):
            if not np.all(np.isfinite(arr)):
                raise InvalidArgumentError(f"{name} contains non-finite entries")
        G = 0.5 * (G + G.T)
        eig = np.linalg.eigvalsh(G)
        scale = max(1.0, float(np.max(np.abs(eig))))
        if eig[0] < -PSD_TOL * scale:
            raise InvalidArgumentError(
                f"G is not positive semidefinite (min eigenvalue {eig[0]:.3e})"
            )
        object.__setattr__(self, "G", _frozen(G))
        object.__setattr__(self, "c", _frozen(c))
        object.__setattr__(self, "A", _frozen(A))
        object.__setattr__(self, "b", _frozen(b))

    @property
    def n(self) -> int:
        return self.c.size

    @property
    def m(self) -> int:
        return self.b.size

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.G @ x + self.c @ x)

    def scale(self) -> float:
        """Data scale ``1 + ||b||_inf + ||c||_inf`` used by the stopping tests."""
        return 1.0 + float(np.max(np.abs(self.b))) + float(np.max(np.abs(self.c)))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "G": self.G.ravel().tolist(),
            "c": self.c.tolist(),
            "A": self.A.ravel().tolist(),
            "b": self.b.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QpProblem":
        """Build a problem from the flat row-major document layout.

        Raises ``InvalidArgumentError`` naming the offending field.
        """
        if not isinstance(data, dict):
            raise InvalidArgumentError("problem document must be an object")
        for key in ("n", "m", "G", "c", "A", "b"):
            if key not in data:
                raise InvalidArgumentError(f"missing field '{key}'")
        n, m = data["n"], data["m"]
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise InvalidArgumentError("field 'n' must be a positive integer")
        if not isinstance(m, int) or isinstance(m, bool) or m < 1:
            raise InvalidArgumentError("field 'm' must be a positive integer")
        expected = {"G": n * n, "c": n, "A": m * n, "b": m}
        arrays = {}
        for key, size in expected.items():
            value = data[key]
            if not isinstance(value, list):
                raise InvalidArgumentError(f"field '{key}' must be a list of reals")
            try:
                arr = np.array([_parse_real(v) for v in value], dtype=float)
            except (TypeError, ValueError) as exc:
                raise InvalidArgumentError(f"field '{key}': {exc}") from None
            if arr.size != size:
                raise InvalidArgumentError(
                    f"field '{key}' has {arr.size} entries, expected {size}"
                )
            arrays[key] = arr
        return cls(
            G=arrays["G"].reshape(n, n),
            c=arrays["c"],
            A=arrays["A"].reshape(m, n),
            b=arrays["b"],
        )


def _parse_real(v) -> float:
    if isinstance(v, bool):
        raise ValueError(f"expected a real number, got {v!r}")
    if isinstance(v, (int, float)):
        return float(v)
    if isinstance(v, str):
        return float(v)
    raise ValueError(f"expected a real number, got {v!r}")


def load_problem(path) -> QpProblem:
    """Read a problem file (JSON document with fields n, m, G, c, A, b)."""
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    try:
        return QpProblem.from_dict(data)
    except InvalidArgumentError as exc:
        raise InvalidArgumentError(f"{path}: {exc}") from None


def save_problem(p: QpProblem, path) -> None:
    with open(path, "w") as fh:
        json.dump(p.to_dict(), fh, indent=2)
        fh.write("\n")


@dataclasses.dataclass(frozen=True)
class IterPoint:
    """Primal-dual iterate ``(x, y, lam)``; arrays are read-only."""

    x: np.ndarray
    y: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.array(self.x, dtype=float)).ravel()
        y = np.atleast_1d(np.array(self.y, dtype=float)).ravel()
        lam = np.atleast_1d(np.array(self.lam, dtype=float)).ravel()
        if y.size != lam.size:
            raise InvalidArgumentError(
                f"y and lam differ in length ({y.size} vs {lam.size})"
            )
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "lam", _frozen(lam))

    def step(self, direction, alpha: float) -> "IterPoint":
        """Point on the ray ``(x, y, lam) + alpha * (dx, dy, dlam)``."""
        dx, dy, dlam = direction
        return IterPoint(self.x + alpha * dx, self.y + alpha * dy, self.lam + alpha * dlam)

    def is_positive(self) -> bool:
        return bool(np.all(self.y > 0) and np.all(self.lam > 0))


class Status(enum.Enum):
    CONVERGED = "converged"
    MAX_ITERATIONS = "max_iterations"
    NUMERICAL_FAILURE = "numerical_failure"


def default_tau(mu: float) -> float:
    """Fraction-to-boundary schedule ``max(0.995, 1 - mu)``, kept below 1."""
    return min(max(0.995, 1.0 - mu), 1.0 - 1e-12)


@dataclasses.dataclass(frozen=True)
class SolverParams:
    gamma: float = 0.1
    beta: float = 0.1
    eps: float = 1e-8
    tau_rule: Callable[[float], float] = default_tau
    max_iter: int = 100
    neighborhood_tol: float = NEIGHBORHOOD_TOL
    # relative to QpProblem.scale()
    feas_tol: float = 1e-9

    def __post_init__(self):
        if not 0.0 < self.gamma < 0.25:
            raise InvalidArgumentError(f"gamma must lie in (0, 1/4), got {self.gamma}")
        if not self.gamma <= self.beta < 0.25:
            raise InvalidArgumentError(
                f"beta must lie in [gamma, 1/4) = [{self.gamma}, 0.25), got {self.beta}"
            )
        if not self.eps > 0:
            raise InvalidArgumentError(f"eps must be positive, got {self.eps}")
        if not (isinstance(self.max_iter, int) and self.max_iter >= 1):
            raise InvalidArgumentError("max_iter must be a positive integer")
        if self.neighborhood_tol < 0 or self.feas_tol <= 0:
            raise InvalidArgumentError("tolerances must be nonnegative")


@dataclasses.dataclass
class SolveResult:
    """Outcome of one interior-point solve.

    ``stats`` holds one dictionary per iteration with solver-specific
    diagnostics (step lengths, branch taken, centrality ratio).
    """

    point: IterPoint
    status: Status
    iterations: int
    mu_history: list[float]
    wall_time: float
    stats: list[dict[str, Any]] = dataclasses.field(default_factory=list)
    message: str = ""

    @property
    def x(self) -> np.ndarray:
        return self.point.x

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


def _check_dims(p: QpProblem, z: IterPoint) -> None:
    if z.x.size != p.n or z.y.size != p.m:
        raise InvalidArgumentError(
            f"iterate has (n, m) = ({z.x.size}, {z.y.size}), problem has ({p.n}, {p.m})"
        )


def kkt_residuals(p: QpProblem, z: IterPoint):
    """Return ``(r_dual, r_prim, comp)``.

    ``r_dual = Gx - A'lam + c``, ``r_prim = Ax - y - b`` and ``comp = y * lam``.
    """
    _check_dims(p, z)
    r_dual = p.G @ z.x - p.A.T @ z.lam + p.c
    r_prim = p.A @ z.x - z.y - p.b
    return r_dual, r_prim, z.y * z.lam


def complementarity_measure(z: IterPoint) -> float:
    m = z.y.size
    if m == 0:
        raise InvalidArgumentError("complementarity measure needs m >= 1")
    return float(z.y @ z.lam) / m


def in_neighborhood(z: IterPoint, gamma: float, tol: float = NEIGHBORHOOD_TOL) -> bool:
    """Centrality test ``min_i y_i lam_i >= gamma * mu - tol``."""
    prod = z.y * z.lam
    return bool(np.min(prod) >= gamma * np.mean(prod) - tol)


def is_strictly_feasible(p: QpProblem, z: IterPoint, tol: float) -> bool:
    r_dual, r_prim, _ = kkt_residuals(p, z)
    return bool(
        np.max(np.abs(r_dual)) <= tol
        and np.max(np.abs(r_prim)) <= tol
        and np.min(z.y) > 0
        and np.min(z.lam) > 0
    )


def is_converged(p: QpProblem, z: IterPoint, params: SolverParams) -> bool:
    """Gap ``y'lam < eps`` and both feasibility residuals below tolerance."""
    r_dual, r_prim, comp = kkt_residuals(p, z)
    tol = params.feas_tol * p.scale()
    return bool(
        comp.sum() < params.eps
        and np.max(np.abs(r_dual)) <= tol
        and np.max(np.abs(r_prim)) <= tol
    )


def finite_point(z: IterPoint) -> bool:
    return bool(
        np.all(np.isfinite(z.x)) and np.all(np.isfinite(z.y)) and np.all(np.isfinite(z.lam))
    )


def inf_norm(v) -> float:
    v = np.asarray(v)
    return float(np.max(np.abs(v))) if v.size else 0.0
