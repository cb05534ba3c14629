"""Receding-horizon GPC simulation and trace export."""

from __future__ import annotations

import csv
import dataclasses
import os
from pathlib import Path

import numpy as np

from .gpc import BOUND_TOL, CarimaModel, GpcConfig, build_gpc_problem
from .mehrotra import solve_mehrotra
from .qp import InvalidArgumentError, QpProblem, SolverParams, Status
from .revised import solve_revised

SOLVERS = {"revised": solve_revised, "mehrotra": solve_mehrotra}
CSV_HEADER = ("t", "w", "y", "u", "du", "iters", "status", "solve_ms")


@dataclasses.dataclass(frozen=True)
class ReferenceSignal:
    """Piecewise-constant reference: ``schedule`` holds ``(start_step, value)``."""

    schedule: tuple[tuple[int, float], ...]

    def __post_init__(self):
        sched = tuple((int(s), float(v)) for s, v in self.schedule)
        if not sched or sched[0][0] != 0:
            raise InvalidArgumentError("reference schedule must start at step 0")
        if any(b[0] <= a[0] for a, b in zip(sched, sched[1:])):
            raise InvalidArgumentError("reference start steps must be strictly increasing")
        object.__setattr__(self, "schedule", sched)

    @classmethod
    def constant(cls, value: float) -> "ReferenceSignal":
        return cls(((0, value),))

    @classmethod
    def square_wave(cls, high: float, low: float, half_period: int, steps: int):
        sched = [(s, high if (s // half_period) % 2 == 0 else low)
                 for s in range(0, max(steps, 1), half_period)]
        return cls(tuple(sched))

    @classmethod
    def parse(cls, text: str) -> "ReferenceSignal":
        """Parse ``"start:value,start:value,..."`` (e.g. ``"0:1,30:-1"``)."""
        try:
            pairs = [item.split(":") for item in text.split(",") if item.strip()]
            return cls(tuple((int(s), float(v)) for s, v in pairs))
        except ValueError:
            raise InvalidArgumentError(
                f"cannot parse reference schedule {text!r}; expected 'start:value,...'"
            ) from None

    def value(self, t: int) -> float:
        v = self.schedule[0][1]
        for start, val in self.schedule:
            if start > t:
                break
            v = val
        return v

    def window(self, start: int, length: int) -> np.ndarray:
        return np.array([self.value(start + k) for k in range(length)])

    def switch_steps(self) -> list[int]:
        return [s for s, _ in self.schedule[1:]]


@dataclasses.dataclass
class ClosedLoopTrace:
    t: list[int] = dataclasses.field(default_factory=list)
    w: list[float] = dataclasses.field(default_factory=list)
    y: list[float] = dataclasses.field(default_factory=list)
    u: list[float] = dataclasses.field(default_factory=list)
    du: list[float] = dataclasses.field(default_factory=list)
    iters: list[int] = dataclasses.field(default_factory=list)
    status: list[str] = dataclasses.field(default_factory=list)
    solve_ms: list[float] = dataclasses.field(default_factory=list)
    completed: bool = True
    message: str = ""
    # (qp, solver x) per step when recording is requested
    problems: list[tuple[QpProblem, np.ndarray]] = dataclasses.field(default_factory=list)

    def __len__(self) -> int:
        return len(self.t)

    def array(self, name: str) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)

    def bound_violations(self, u_min: float, u_max: float, tol: float = BOUND_TOL) -> int:
        u = self.array("u")
        return int(np.sum((u < u_min - tol) | (u > u_max + tol)))


def simulate(
    model: CarimaModel,
    cfg: GpcConfig,
    ref: ReferenceSignal,
    T: int,
    solver: str = "revised",
    params: SolverParams | None = None,
    u_init: float = 0.0,
    record_problems: bool = False,
) -> ClosedLoopTrace:
    """Run ``T`` receding-horizon steps against the noise-free model itself.

    The plant starts at rest (zero output and increment histories) with
    ``u(-1) = u_init``. A numerical failure, or an input that leaves the
    bounds, ends the run early with ``completed = False``.
    """
    if T < 1:
        raise InvalidArgumentError("need at least one step")
    if solver not in SOLVERS:
        raise InvalidArgumentError(f"unknown solver {solver!r}; choose from {sorted(SOLVERS)}")
    solve = SOLVERS[solver]
    at = model.a_tilde
    y_hist = np.zeros(max(model.y_history_len, at.size))
    # du_hist[k] = du(t - 1 - k) before the step, du(t - k) after it
    du_hist = np.zeros(model.d + model.b.size + 1)
    u_prev = u_init
    trace = ClosedLoopTrace()

    for t in range(T):
        w_future = ref.window(t + model.d + 1, cfg.N)
        prob = build_gpc_problem(model, cfg, y_hist, du_hist, u_prev, w_future)
        res = solve(prob.qp, params)
        du = float(res.x[0])
        u = u_prev + du
        trace.t.append(t)
        trace.w.append(ref.value(t))
        trace.y.append(float(y_hist[0]))
        trace.u.append(u)
        trace.du.append(du)
        trace.iters.append(res.iterations)
        trace.status.append(res.status.value)
        trace.solve_ms.append(res.wall_time * 1e3)
        if record_problems:
            trace.problems.append((prob.qp, np.array(res.x)))
        if res.status is Status.NUMERICAL_FAILURE:
            trace.completed = False
            trace.message = f"step {t}: {res.message}"
            break
        if not (cfg.u_min - BOUND_TOL <= u <= cfg.u_max + BOUND_TOL):
            trace.completed = False
            trace.message = f"step {t}: input {u:.6g} left [{cfg.u_min}, {cfg.u_max}]"
            break

        du_hist = np.roll(du_hist, 1)
        du_hist[0] = du
        # At(q^-1) y(t+1) = B(q^-1) du(t - d)
        y_next = -at[1:] @ y_hist[: at.size - 1] + model.b @ du_hist[model.d : model.d + model.b.size]
        y_hist = np.roll(y_hist, 1)
        y_hist[0] = y_next
        u_prev = u
    return trace


def _fmt(v: float) -> str:
    return f"{float(v) + 0.0:.12g}"


def export_trace(trace: ClosedLoopTrace, directory) -> list[Path]:
    """Write ``r.dat``, ``y.dat``, ``ureal.dat``, ``deltaU.dat`` and ``trace.csv``."""
    if len(trace) == 0:
        raise InvalidArgumentError("cannot export an empty trace")
    out = Path(directory)
    try:
        os.makedirs(out, exist_ok=True)
        written = []
        for name, series in (("r.dat", trace.w), ("y.dat", trace.y),
                             ("ureal.dat", trace.u), ("deltaU.dat", trace.du)):
            path = out / name
            with open(path, "w") as fh:
                for t, v in zip(trace.t, series):
                    fh.write(f"{t} {_fmt(v)}\n")
            written.append(path)
        path = out / "trace.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_HEADER)
            for row in zip(trace.t, trace.w, trace.y, trace.u, trace.du,
                           trace.iters, trace.status, trace.solve_ms):
                t, w, y, u, du, it, st, ms = row
                writer.writerow([t, _fmt(w), _fmt(y), _fmt(u), _fmt(du), it, st, _fmt(ms)])
        written.append(path)
    except OSError as exc:
        raise OSError(f"failed writing trace to {exc.filename or out}: {exc.strerror}") from exc
    return written


def read_trace(path) -> ClosedLoopTrace:
    trace = ClosedLoopTrace()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise InvalidArgumentError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            trace.t.append(int(row["t"]))
            trace.w.append(float(row["w"]))
            trace.y.append(float(row["y"]))
            trace.u.append(float(row["u"]))
            trace.du.append(float(row["du"]))
            trace.iters.append(int(row["iters"]))
            trace.status.append(row["status"])
            trace.solve_ms.append(float(row["solve_ms"]))
    return trace
