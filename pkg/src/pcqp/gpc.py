"""Generalized predictive control: CARIMA prediction and QP assembly.

Plant model (noise-free, ``C = 1``)::

    A(q^-1) y(t) = B(q^-1) q^-d u(t-1) + e(t) / Delta,    Delta = 1 - q^-1

Polynomials are coefficient arrays in ascending powers of ``q^-1``. Histories
are passed newest first: ``y_past[k] = y(t - k)`` and
``du_past[k] = du(t - 1 - k)``.

Predictions over ``j = 1..N`` cover ``y(t+d+j)``; the decision vector is
``x = (du(t), ..., du(t+Nu-1))``.
"""

from __future__ import annotations

import dataclasses
import json
from typing import Iterator

import numpy as np

from .qp import InvalidArgumentError, QpProblem

BOUND_TOL = 1e-8


@dataclasses.dataclass(frozen=True)
class CarimaModel:
    a: np.ndarray
    b: np.ndarray
    d: int = 0

    def __post_init__(self):
        a = np.atleast_1d(np.array(self.a, dtype=float))
        b = np.atleast_1d(np.array(self.b, dtype=float))
        if a.ndim != 1 or a.size < 1 or a[0] != 1.0:
            raise InvalidArgumentError("A polynomial must be monic (leading coefficient 1)")
        if b.ndim != 1 or b.size < 1 or not np.any(b != 0):
            raise InvalidArgumentError("B polynomial must be nonzero")
        if not (isinstance(self.d, (int, np.integer)) and self.d >= 0):
            raise InvalidArgumentError("delay d must be a nonnegative integer")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "d", int(self.d))

    @property
    def a_tilde(self) -> np.ndarray:
        return a_tilde(self.a)

    @property
    def y_history_len(self) -> int:
        """Number of past outputs ``y(t), y(t-1), ...`` a prediction needs."""
        return self.a.size

    @property
    def du_history_len(self) -> int:
        """Number of past increments ``du(t-1), du(t-2), ...`` a prediction needs."""
        return self.d + self.b.size - 1

    def dc_gain(self) -> float:
        return float(self.b.sum() / self.a.sum())


@dataclasses.dataclass(frozen=True)
class GpcConfig:
    """Horizons, weights and input bounds.

    ``delta`` weights the tracking error and ``eta`` the control increments.
    Optional ``du_min``/``du_max`` add rate-limit rows to the constraints.
    """

    N: int
    Nu: int
    eta: float = 1.0
    delta: float = 1.0
    u_min: float = -0.5
    u_max: float = 1.0
    du_min: float | None = None
    du_max: float | None = None

    def __post_init__(self):
        if not (1 <= self.Nu <= self.N):
            raise InvalidArgumentError(f"need 1 <= Nu <= N, got Nu={self.Nu}, N={self.N}")
        if self.eta < 0 or self.delta <= 0:
            raise InvalidArgumentError("need eta >= 0 and delta > 0")
        if not self.u_min < self.u_max:
            raise InvalidArgumentError("need u_min < u_max")
        if (self.du_min is None) != (self.du_max is None):
            raise InvalidArgumentError("rate bounds du_min and du_max go together")
        if self.du_min is not None and not self.du_min < 0 < self.du_max:
            raise InvalidArgumentError("rate bounds must satisfy du_min < 0 < du_max")


@dataclasses.dataclass(frozen=True)
class GpcProblem:
    gamma: np.ndarray
    f: np.ndarray
    w: np.ndarray
    qp: QpProblem
    f0: float

    def predicted_output(self, x) -> np.ndarray:
        return self.gamma @ np.asarray(x, dtype=float) + self.f


def a_tilde(a) -> np.ndarray:
    """``Delta * A``, i.e. ``A`` convolved with ``[1, -1]``."""
    return np.convolve([1.0, -1.0], np.asarray(a, dtype=float))


def diophantine_sequence(at, jmax: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Yield ``(E_j, F_j)`` for ``j = 1..jmax`` with ``1 = E_j At + q^-j F_j``.

    Each step performs one more stage of the long division of 1 by ``At``:
    the leading remainder coefficient is appended to ``E`` and the remainder
    is reduced by that multiple of ``At`` and shifted.
    """
    at = np.asarray(at, dtype=float)
    if at[0] != 1.0:
        raise InvalidArgumentError("At must be monic")
    deg = at.size - 1
    E = np.array([1.0])
    F = -at[1:].copy()
    if deg == 0:
        F = np.zeros(1)
    for j in range(1, jmax + 1):
        yield E, F
        f0 = F[0]
        E = np.append(E, f0)
        F = np.append(F[1:], 0.0) - f0 * at[1:] if deg else np.zeros(1)


def diophantine(at, j: int) -> tuple[np.ndarray, np.ndarray]:
    if j < 1:
        raise InvalidArgumentError("j must be at least 1")
    for E, F in diophantine_sequence(at, j):
        pass
    return E, F


def _prediction_polys(model: CarimaModel, N: int):
    """``F_{d+j}`` and ``G_{d+j} = E_{d+j} B`` for ``j = 1..N``."""
    Fs, Gs = [], []
    for j, (E, F) in enumerate(diophantine_sequence(model.a_tilde, model.d + N), start=1):
        if j > model.d:
            Fs.append(F)
            Gs.append(np.convolve(E, model.b))
    return Fs, Gs


def dynamic_matrix(model: CarimaModel, N: int, Nu: int):
    """Return ``(Gamma, g)``: the N-by-Nu lower-triangular Toeplitz matrix of
    step-response coefficients and the coefficients ``g_0..g_{N-1}``."""
    if not 1 <= Nu <= N:
        raise InvalidArgumentError(f"need 1 <= Nu <= N, got Nu={Nu}, N={N}")
    g = np.empty(N)
    for k, (E, _) in enumerate(diophantine_sequence(model.a_tilde, N)):
        Gk = np.convolve(E, model.b)
        g[k] = Gk[k] if k < Gk.size else 0.0
    Gamma = np.zeros((N, Nu))
    for i in range(N):
        for j in range(min(i + 1, Nu)):
            Gamma[i, j] = g[i - j]
    return Gamma, g


def free_response(model: CarimaModel, y_past, du_past, N: int) -> np.ndarray:
    """Predicted outputs ``y(t+d+1..t+d+N)`` with all future increments zero.

    ``f_j = F_{d+j}(q^-1) y(t) + Gamma'_j(q^-1) du(t-1)`` where ``Gamma'_j``
    holds the coefficients of ``G_{d+j}`` beyond the first ``j``.
    """
    y_past = np.asarray(y_past, dtype=float)
    du_past = np.asarray(du_past, dtype=float)
    if y_past.size < model.y_history_len:
        raise InvalidArgumentError(
            f"need {model.y_history_len} past outputs, got {y_past.size}"
        )
    if du_past.size < model.du_history_len:
        raise InvalidArgumentError(
            f"need {model.du_history_len} past increments, got {du_past.size}"
        )
    Fs, Gs = _prediction_polys(model, N)
    f = np.empty(N)
    for j in range(1, N + 1):
        F, G = Fs[j - 1], Gs[j - 1]
        past = G[j:]
        f[j - 1] = F @ y_past[: F.size] + past @ du_past[: past.size]
    return f


def build_qp(
    Gamma,
    f,
    w,
    eta: float,
    u_prev: float,
    u_min: float,
    u_max: float,
    delta: float = 1.0,
    du_min: float | None = None,
    du_max: float | None = None,
) -> tuple[QpProblem, float]:
    """Assemble the input-constrained GPC quadratic program.

    Cost ``1/2 x'Gx + c'x + f0`` with ``G = 2(delta Gamma'Gamma + eta I)``,
    ``c = 2 delta Gamma'(f - w)`` and ``f0 = delta (f - w)'(f - w)``.
    Amplitude bounds ``u_min <= u_prev + cumsum(x) <= u_max`` become
    ``[L; -L] x >= [(u_min - u_prev) e; (u_prev - u_max) e]`` with ``L`` the
    lower-triangular ones matrix; optional rate bounds append ``[I; -I]`` rows.
    """
    Gamma = np.atleast_2d(np.asarray(Gamma, dtype=float))
    f = np.asarray(f, dtype=float)
    w = np.asarray(w, dtype=float)
    N, Nu = Gamma.shape
    if f.shape != (N,) or w.shape != (N,):
        raise InvalidArgumentError(f"f and w must have length {N}")
    if eta < 0:
        raise InvalidArgumentError("eta must be nonnegative")
    if not (u_min - BOUND_TOL <= u_prev <= u_max + BOUND_TOL):
        raise InvalidArgumentError(
            f"previous input {u_prev} lies outside [{u_min}, {u_max}]"
        )
    e = f - w
    G = 2.0 * (delta * Gamma.T @ Gamma + eta * np.eye(Nu))
    c = 2.0 * delta * Gamma.T @ e
    f0 = float(delta * e @ e)
    L = np.tril(np.ones((Nu, Nu)))
    A = [L, -L]
    b = [np.full(Nu, u_min - u_prev), np.full(Nu, u_prev - u_max)]
    if du_min is not None:
        A += [np.eye(Nu), -np.eye(Nu)]
        b += [np.full(Nu, du_min), np.full(Nu, -du_max)]
    return QpProblem(G, c, np.vstack(A), np.concatenate(b)), f0


def gpc_cost(x, G, c, f0: float) -> float:
    x = np.asarray(x, dtype=float)
    return float(0.5 * x @ G @ x + c @ x + f0)


def build_gpc_problem(
    model: CarimaModel, cfg: GpcConfig, y_past, du_past, u_prev: float, w
) -> GpcProblem:
    Gamma, _ = dynamic_matrix(model, cfg.N, cfg.Nu)
    f = free_response(model, y_past, du_past, cfg.N)
    w = np.asarray(w, dtype=float)
    qp, f0 = build_qp(
        Gamma, f, w, cfg.eta, u_prev, cfg.u_min, cfg.u_max,
        delta=cfg.delta, du_min=cfg.du_min, du_max=cfg.du_max,
    )
    return GpcProblem(Gamma, f, w, qp, f0)


MODEL_FIELDS = ("a", "b", "d", "N", "Nu", "eta", "umin", "umax")


def model_from_dict(data: dict) -> tuple[CarimaModel, GpcConfig]:
    """Parse a model document with fields a, b, d, N, Nu, eta, umin, umax.

    ``N`` defaults to ``Nu`` and ``d`` to 0.
    """
    if not isinstance(data, dict):
        raise InvalidArgumentError("model document must be an object")
    for key in ("a", "b", "Nu", "eta", "umin", "umax"):
        if key not in data:
            raise InvalidArgumentError(f"missing field '{key}'")
    unknown = set(data) - set(MODEL_FIELDS) - {"du_min", "du_max", "delta"}
    if unknown:
        raise InvalidArgumentError(f"unknown field(s): {', '.join(sorted(unknown))}")
    for key in ("a", "b"):
        if not isinstance(data[key], list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in data[key]
        ):
            raise InvalidArgumentError(f"field '{key}' must be a list of reals")
    for key in ("d", "N", "Nu"):
        if key in data and (not isinstance(data[key], int) or isinstance(data[key], bool)):
            raise InvalidArgumentError(f"field '{key}' must be an integer")
    for key in ("eta", "umin", "umax", "delta", "du_min", "du_max"):
        if key in data and (not isinstance(data[key], (int, float)) or isinstance(data[key], bool)):
            raise InvalidArgumentError(f"field '{key}' must be a real number")
    try:
        model = CarimaModel(data["a"], data["b"], data.get("d", 0))
        cfg = GpcConfig(
            N=data.get("N", data["Nu"]),
            Nu=data["Nu"],
            eta=float(data["eta"]),
            delta=float(data.get("delta", 1.0)),
            u_min=float(data["umin"]),
            u_max=float(data["umax"]),
            du_min=data.get("du_min"),
            du_max=data.get("du_max"),
        )
    except InvalidArgumentError as exc:
        raise InvalidArgumentError(f"invalid model: {exc}") from None
    return model, cfg


def load_model(path) -> tuple[CarimaModel, GpcConfig]:
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(
            f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    try:
        return model_from_dict(data)
    except InvalidArgumentError as exc:
        raise InvalidArgumentError(f"{path}: {exc}") from None
