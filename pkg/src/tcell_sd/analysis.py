"""Scenario runs, derived metrics, parameter sweeps, sensitivities and fitting."""

from __future__ import annotations

import bisect
import itertools
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import engine
from .engine import IntegrationError, Trajectory
from .model import (ModelError, ParameterSet, ScenarioSpec, TCellState, make_rhs,
                    thymic_export, trec_fraction)
from .scenarios import ConfigError, get_value, resolve_path, set_value

HALF_TREC = 0.5
DEFAULT_METRICS = ("final_N", "final_Np", "final_M", "peak_total_naive", "half_trec_age")
OBSERVABLES = ("N", "Np", "M", "total_naive", "trec_fraction", "thymic_export")

_SIMPLE_METRICS = {
    "final_N": "cells",
    "final_Np": "cells",
    "final_M": "cells",
    "peak_total_naive": "cells",
    "half_trec_age": "years",
}
_TIMED_METRICS = {
    "total_naive_at": "cells",
    "trec_fraction_at": "dimensionless",
}
_TIMED = re.compile(r"^(\w+)\(\s*([^()]+?)\s*\)$")


class SensitivityUndefined(ValueError):
    pass


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class MetricValue:
    name: str
    value: float | None
    units: str


@dataclass(frozen=True)
class ScenarioResult:
    scenario: ScenarioSpec
    trajectory: Trajectory
    metrics: tuple

    def metric(self, name: str) -> float | None:
        for m in self.metrics:
            if m.name == name:
                return m.value
        raise KeyError(name)


def parse_metric(name: str) -> tuple[str, float | None]:
    """Split a metric name into its kind and optional time argument."""
    if name in _SIMPLE_METRICS:
        return name, None
    match = _TIMED.match(name)
    if match and match.group(1) in _TIMED_METRICS:
        try:
            return match.group(1), float(match.group(2))
        except ValueError:
            pass
    known = list(_SIMPLE_METRICS) + [f"{k}(<t>)" for k in _TIMED_METRICS]
    raise ConfigError(f"unknown metric {name!r}; known: {', '.join(known)}", key=name)


def metric_units(name: str) -> str:
    kind, _ = parse_metric(name)
    return _SIMPLE_METRICS.get(kind) or _TIMED_METRICS[kind]


def _interp_state(traj: Trajectory, t: float) -> TCellState:
    times = traj.times
    if not times[0] <= t <= times[-1]:
        raise ConfigError(f"time {t!r} outside simulated range [{times[0]!r}, {times[-1]!r}]")
    i = bisect.bisect_left(times, t)
    if times[i] == t:
        return TCellState.from_values(traj.values[i])
    w = (t - times[i - 1]) / (times[i] - times[i - 1])
    a, b = traj.values[i - 1], traj.values[i]
    return TCellState.from_values(tuple(x + w * (y - x) for x, y in zip(a, b)))


def observable_at(traj: Trajectory, params: ParameterSet, name: str, t: float) -> float | None:
    """Observable at time ``t``, linearly interpolating stocks between records."""
    y = _interp_state(traj, t)
    if name in ("N", "Np", "M"):
        return getattr(y, name)
    if name == "total_naive":
        return y.N + y.Np
    if name == "trec_fraction":
        return trec_fraction(y)
    if name == "thymic_export":
        return thymic_export(t, y, params)
    raise ConfigError(f"unknown observable {name!r}; known: {', '.join(OBSERVABLES)}", key=name)


def _half_trec_age(traj: Trajectory) -> float | None:
    prev_t = prev_f = None
    for t, v in zip(traj.times, traj.values):
        f = trec_fraction(TCellState.from_values(v))
        if f is not None and f < HALF_TREC:
            if prev_f is None:
                return t
            return prev_t + (prev_f - HALF_TREC) / (prev_f - f) * (t - prev_t)
        prev_t, prev_f = t, f
    return None


def evaluate_metric(traj: Trajectory, params: ParameterSet, name: str) -> MetricValue:
    kind, arg = parse_metric(name)
    final = traj.values[-1]
    if kind == "final_N":
        value = final[0]
    elif kind == "final_Np":
        value = final[1]
    elif kind == "final_M":
        value = final[2]
    elif kind == "peak_total_naive":
        value = max(v[0] + v[1] for v in traj.values)
    elif kind == "half_trec_age":
        value = _half_trec_age(traj)
    elif kind == "total_naive_at":
        value = observable_at(traj, params, "total_naive", arg)
    else:
        value = observable_at(traj, params, "trec_fraction", arg)
    return MetricValue(name, value, metric_units(name))


def _tag(exc, name):
    if isinstance(exc, IntegrationError):
        err = type(exc)(f"scenario {name!r}: {exc}", stock=exc.stock, time=exc.time)
    else:
        err = ModelError(f"scenario {name!r}: {exc}", term=exc.term, time=exc.time)
    err.scenario = name
    return err


def simulate(s: ScenarioSpec) -> Trajectory:
    try:
        return engine.integrate(make_rhs(s.params), engine.StateVector(s.initial.as_tuple(), ("N", "Np", "M")),
                                s.integration)
    except (IntegrationError, ModelError) as exc:
        raise _tag(exc, s.name) from exc


def run_scenario(s: ScenarioSpec, metrics=DEFAULT_METRICS) -> ScenarioResult:
    """Integrate ``s`` and attach the requested metrics."""
    for name in metrics:
        parse_metric(name)
    traj = simulate(s)
    values = tuple(evaluate_metric(traj, s.params, m) for m in metrics)
    return ScenarioResult(s, traj, values)


def observables_table(traj: Trajectory, params: ParameterSet) -> list[tuple]:
    """Rows ``(t, N, Np, M, total_naive, trec_fraction, thymic_export)``."""
    rows = []
    for t, v in zip(traj.times, traj.values):
        y = TCellState.from_values(v)
        rows.append((t, y.N, y.Np, y.M, y.N + y.Np, trec_fraction(y), thymic_export(t, y, params)))
    return rows


# --- sweeps ---------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    base: ScenarioSpec
    axes: tuple       # ((path, (v1, v2, ...)), ...)
    metrics: tuple = DEFAULT_METRICS

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple((p, tuple(vs)) for p, vs in self.axes))
        object.__setattr__(self, "metrics", tuple(self.metrics))
        if not self.axes:
            raise ConfigError("sweep needs at least one axis", key="axis")
        for path, values in self.axes:
            resolve_path(path)
            if not values:
                raise ConfigError(f"axis {path!r} has no values", key=path)
        paths = [p for p, _ in self.axes]
        if len(set(map(resolve_path, paths))) != len(paths):
            raise ConfigError("sweep axes repeat a parameter", key="axis")
        if not self.metrics:
            raise ConfigError("sweep needs at least one metric", key="metric")
        for m in self.metrics:
            parse_metric(m)

    @property
    def size(self) -> int:
        return math.prod(len(vs) for _, vs in self.axes)


@dataclass(frozen=True)
class SweepRow:
    coords: tuple
    values: tuple      # metric values, None when missing or failed
    error: str | None = None


@dataclass(frozen=True)
class SweepResult:
    spec: SweepSpec
    rows: tuple

    @property
    def columns(self) -> tuple:
        return tuple(p for p, _ in self.spec.axes) + self.spec.metrics


def _sweep_point(args):
    base, paths, coords, metrics = args
    try:
        s = base
        for path, value in zip(paths, coords):
            s = set_value(s, path, value)
        result = run_scenario(s, metrics)
    except (IntegrationError, ModelError, ValueError) as exc:
        return SweepRow(coords, (None,) * len(metrics), f"{type(exc).__name__}: {exc}")
    return SweepRow(coords, tuple(m.value for m in result.metrics))


def sweep(spec: SweepSpec, workers: int | None = None) -> SweepResult:
    """Evaluate every grid point; rows follow ``itertools.product`` order of the axes.

    With ``workers > 1`` grid points run in a process pool; row order does not
    depend on completion order.
    """
    paths = tuple(p for p, _ in spec.axes)
    tasks = [(spec.base, paths, coords, spec.metrics)
             for coords in itertools.product(*(vs for _, vs in spec.axes))]
    if workers and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_point, tasks))
    else:
        rows = [_sweep_point(t) for t in tasks]
    return SweepResult(spec, tuple(rows))


# --- sensitivity ----------------------------------------------------------

def central_difference(m_plus: float, m_minus: float, step: float) -> float:
    return (m_plus - m_minus) / (2.0 * step)


def sensitivity(s: ScenarioSpec, path: str, metric: str, rel_delta: float = 1e-3,
                absolute: bool = False) -> float:
    """Central-difference derivative of ``metric`` with respect to ``path``.

    The probes sit at ``p * (1 +- rel_delta)``; with ``absolute=True`` they sit
    at ``p +- rel_delta`` instead, which is required when ``p == 0``.
    """
    parse_metric(metric)
    p = get_value(s, path)
    if isinstance(p, str):
        raise ConfigError(f"{path} is not numeric", key=path)
    if not rel_delta > 0:
        raise ConfigError("delta must be > 0", key="delta")
    step = rel_delta if absolute else p * rel_delta
    if step == 0:
        raise ConfigError(f"{path} is 0; a relative step is undefined, use an absolute delta", key=path)
    probes = []
    for value in (p + step, p - step):
        m = run_scenario(set_value(s, path, value), (metric,)).metrics[0].value
        if m is None:
            raise SensitivityUndefined(f"{metric} is undefined at {path}={value!r}")
        probes.append(m)
    return central_difference(probes[0], probes[1], step)


# --- fitting --------------------------------------------------------------

GRID_POINTS = 7
MAX_REFINE_EVALS = 500
SIMPLEX_TOL = 1e-6


@dataclass(frozen=True)
class FitSpec:
    base: ScenarioSpec
    free: tuple         # ((path, lower, upper), ...)
    reference: tuple    # ((t, observable, value), ...)

    def __post_init__(self):
        object.__setattr__(self, "free", tuple((p, float(lo), float(hi)) for p, lo, hi in self.free))
        object.__setattr__(self, "reference", tuple((float(t), o, float(v)) for t, o, v in self.reference))
        if not self.free:
            raise ConfigError("fit needs at least one free parameter", key="free")
        for path, lo, hi in self.free:
            resolve_path(path)
            if isinstance(get_value(self.base, path), str):
                raise ConfigError(f"{path} is not numeric", key=path)
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ConfigError(f"bounds for {path} must be finite with lower < upper", key=path)
        if len(self.reference) < 2 * len(self.free):
            raise ConfigError(f"need at least {2 * len(self.free)} reference points, "
                              f"got {len(self.reference)}", key="reference")
        cfg = self.base.integration
        for t, obs, _ in self.reference:
            if obs not in OBSERVABLES:
                raise ConfigError(f"unknown observable {obs!r}; known: {', '.join(OBSERVABLES)}", key=obs)
            if not cfg.t0 <= t <= cfg.t_end:
                raise ConfigError(f"reference time {t!r} outside [{cfg.t0!r}, {cfg.t_end!r}]", key="reference")


@dataclass(frozen=True)
class FitResult:
    scenario: ScenarioSpec
    values: dict
    loss: float
    grid_best_loss: float
    evaluations: int

    @property
    def params(self) -> ParameterSet:
        return self.scenario.params


class _Axis:
    def __init__(self, lo, hi):
        self.lo, self.hi = lo, hi
        self.log = lo > 0

    def to_value(self, u):
        u = min(max(u, 0.0), 1.0)
        x = self.lo * (self.hi / self.lo) ** u if self.log else self.lo + u * (self.hi - self.lo)
        return min(max(x, self.lo), self.hi)


def fit_loss(spec: FitSpec, values) -> float:
    """Sum of squared residuals against the reference; inf if the run fails."""
    s = spec.base
    try:
        for (path, _, _), v in zip(spec.free, values):
            s = set_value(s, path, v)
        traj = simulate(s)
    except (IntegrationError, ModelError, ValueError):
        return math.inf
    total = 0.0
    for t, obs, ref in spec.reference:
        model = observable_at(traj, s.params, obs, t)
        if model is None:
            return math.inf
        total += (model - ref) ** 2
    return total


def fit(spec: FitSpec) -> FitResult:
    """Bounded derivative-free least squares.

    A coarse grid of 7 points per free axis (log-spaced for positive bounds)
    seeds a Nelder-Mead refinement in unit-box coordinates. The initial simplex
    is the best grid point plus one grid spacing (1/6 of the box) along each
    axis, stepping inward at the upper edge. Refinement stops at a simplex
    extent of 1e-6 of the box or after 500 evaluations.
    """
    axes = [_Axis(lo, hi) for _, lo, hi in spec.free]
    n_evals = 0

    def loss_u(u):
        nonlocal n_evals
        n_evals += 1
        return fit_loss(spec, [a.to_value(x) for a, x in zip(axes, u)])

    grid = np.linspace(0.0, 1.0, GRID_POINTS)
    best_u, best_loss = None, math.inf
    for u in itertools.product(grid, repeat=len(axes)):
        loss = loss_u(u)
        if loss < best_loss:
            best_u, best_loss = np.array(u), loss
    if best_u is None:
        raise FitError("every coarse grid evaluation failed")
    grid_best = best_loss

    spacing = 1.0 / (GRID_POINTS - 1)
    simplex = [best_u.copy()]
    for i in range(len(axes)):
        vertex = best_u.copy()
        vertex[i] += spacing if vertex[i] + spacing <= 1.0 else -spacing
        simplex.append(vertex)
    res = minimize(loss_u, best_u, method="Nelder-Mead", bounds=[(0.0, 1.0)] * len(axes),
                   options={"initial_simplex": np.array(simplex), "xatol": SIMPLEX_TOL,
                            "fatol": math.inf, "maxfev": MAX_REFINE_EVALS})
    if res.fun < best_loss:
        best_u, best_loss = res.x, float(res.fun)

    values = {path: float(a.to_value(float(u))) for (path, _, _), a, u in zip(spec.free, axes, best_u)}
    s = spec.base
    for path, v in values.items():
        s = set_value(s, path, v)
    return FitResult(s, values, best_loss, grid_best, n_evals)
