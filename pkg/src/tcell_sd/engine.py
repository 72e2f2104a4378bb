"""Deterministic initial-value-problem integrator for stock-and-flow systems.

A system is a pure derivative function ``f(t, y) -> rates`` where ``y`` is a
tuple of stock levels. Three explicit methods are available: forward Euler,
classical RK4 and the Runge-Kutta-Fehlberg 4(5) embedded pair with adaptive
step-size control. Stocks are plain Python floats; the systems this engine
serves have a handful of stocks, where array overhead would dominate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

logger = logging.getLogger(__name__)

Derivative = Callable[[float, tuple], Sequence[float]]

METHODS = ("euler", "rk4", "rkf45")
NEGATIVITY_POLICIES = ("clamp", "reject")

# record times closer than this fraction of record_interval to t_end merge with it
_RECORD_SNAP = 1e-9


class IntegrationError(Exception):
    """Numerical failure during integration, tagged with stock and time."""

    def __init__(self, message: str, stock: str | None = None, time: float | None = None):
        super().__init__(message)
        self.stock = stock
        self.time = time


class NonFiniteError(IntegrationError):
    pass


class NegativeStockError(IntegrationError):
    pass


class StepSizeUnderflow(IntegrationError):
    pass


@dataclass(frozen=True)
class StateVector:
    values: tuple
    labels: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.values) != len(self.labels):
            raise ValueError(
                f"{len(self.values)} values but {len(self.labels)} labels")

    @classmethod
    def of(cls, values: Sequence[float], labels: Sequence[str] | None = None) -> "StateVector":
        if labels is None:
            labels = tuple(f"y{i}" for i in range(len(values)))
        return cls(tuple(values), tuple(labels))

    def __getitem__(self, key):
        if isinstance(key, str):
            return self.values[self.labels.index(key)]
        return self.values[key]

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class IntegrationConfig:
    t0: float = 0.0
    t_end: float = 100.0
    method: str = "rk4"
    dt: float = 0.01
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    dt_min: float = 1e-10
    dt_max: float = 1.0
    record_interval: float = 0.1
    negativity_policy: str = "clamp"

    def __post_init__(self):
        for name in ("t0", "t_end", "dt", "abs_tol", "rel_tol", "dt_min", "dt_max", "record_interval"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(f"{name} must be a number, got {value!r}")
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.negativity_policy not in NEGATIVITY_POLICIES:
            raise ValueError(
                f"negativity_policy must be one of {NEGATIVITY_POLICIES}, got {self.negativity_policy!r}")
        if not self.t_end > self.t0:
            raise ValueError(f"t_end ({self.t_end}) must exceed t0 ({self.t0})")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if not 0 < self.dt_min <= self.dt_max:
            raise ValueError("need 0 < dt_min <= dt_max")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be > 0")
        if not self.record_interval > 0:
            raise ValueError("record_interval must be > 0")

    def with_(self, **changes) -> "IntegrationConfig":
        return replace(self, **changes)

    def record_times(self) -> list[float]:
        """Sample times ``t0 + k * record_interval``, always closed by ``t_end``."""
        span = self.t_end - self.t0
        n = math.floor(span / self.record_interval + _RECORD_SNAP)
        # 15 significant digits drops representation noise such as 0.30000000000000004
        times = [self.t0] + [float(f"{self.t0 + k * self.record_interval:.15g}") for k in range(1, n + 1)]
        if self.t_end - times[-1] > _RECORD_SNAP * self.record_interval:
            times.append(self.t_end)
        else:
            times[-1] = self.t_end
        return times


@dataclass(frozen=True)
class ClampEvent:
    time: float
    stock: str
    value: float


@dataclass
class StepLog:
    accepted: int = 0
    rejected: int = 0
    clamps: list = field(default_factory=list)


@dataclass(frozen=True)
class Trajectory:
    times: tuple
    values: tuple    # one tuple of stock levels per time
    labels: tuple
    step_log: StepLog

    def __len__(self):
        return len(self.times)

    @property
    def states(self) -> list[StateVector]:
        return [StateVector(v, self.labels) for v in self.values]

    def column(self, label: str) -> list[float]:
        i = self.labels.index(label)
        return [v[i] for v in self.values]

    @property
    def final(self) -> StateVector:
        return StateVector(self.values[-1], self.labels)


def _check_finite(rates, t, labels):
    # a finite sum is the cheap common case; overflow of the sum alone is tolerated
    if math.isfinite(sum(rates)):
        return
    for r, label in zip(rates, labels):
        if not math.isfinite(r):
            raise NonFiniteError(
                f"non-finite derivative for stock {label!r} at t={t!r}", stock=label, time=t)


def _eval(f, t, y, labels):
    k = tuple(f(t, y))
    if len(k) != len(y):
        raise IntegrationError(f"derivative returned {len(k)} rates for {len(y)} stocks", time=t)
    _check_finite(k, t, labels)
    return k


def _euler(f, t, y, dt, labels):
    k = f(t, y)
    if not math.isfinite(sum(k)):
        _check_finite(k, t, labels)
    return tuple([a + dt * b for a, b in zip(y, k)])


def _rk4(f, t, y, dt, labels):
    half = 0.5 * dt
    k1 = f(t, y)
    k2 = f(t + half, [a + half * b for a, b in zip(y, k1)])
    k3 = f(t + half, [a + half * b for a, b in zip(y, k2)])
    k4 = f(t + dt, [a + dt * b for a, b in zip(y, k3)])
    if not math.isfinite(sum(k1) + sum(k2) + sum(k3) + sum(k4)):
        for k, tk in ((k1, t), (k2, t + half), (k3, t + half), (k4, t + dt)):
            _check_finite(k, tk, labels)
    sixth = dt / 6.0
    return tuple([a + sixth * (p + 2.0 * q + 2.0 * r + s)
                  for a, p, q, r, s in zip(y, k1, k2, k3, k4)])


# Fehlberg's tableau; the 4th-order solution is propagated, the 5th-order one estimates error
_C = (0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2)
_A = (
    (),
    (1 / 4,),
    (3 / 32, 9 / 32),
    (1932 / 2197, -7200 / 2197, 7296 / 2197),
    (439 / 216, -8.0, 3680 / 513, -845 / 4104),
    (-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40),
)
_B4 = (25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0)
_E = (1 / 360, 0.0, -128 / 4275, -2197 / 75240, 1 / 50, 2 / 55)   # B5 - B4


def _rkf45(f, t, y, dt, labels):
    """One Fehlberg step: returns (4th-order state, per-stock error estimate)."""
    ks = []
    for c, row in zip(_C, _A):
        yi = tuple(a + dt * sum(w * k[j] for w, k in zip(row, ks)) for j, a in enumerate(y)) if row else y
        ks.append(_eval(f, t + c * dt, yi, labels))
    y4 = tuple(a + dt * sum(w * k[j] for w, k in zip(_B4, ks)) for j, a in enumerate(y))
    err = tuple(abs(dt * sum(w * k[j] for w, k in zip(_E, ks))) for j in range(len(y)))
    return y4, err


def _labels_for(y):
    return y.labels if isinstance(y, StateVector) else tuple(f"y{i}" for i in range(len(y)))


def _values_for(y):
    return y.values if isinstance(y, StateVector) else tuple(float(v) for v in y)


def step_euler(f: Derivative, t: float, y, dt: float) -> StateVector:
    """Single explicit Euler step ``y + dt * f(t, y)``."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    labels = _labels_for(y)
    values = _values_for(y)
    _eval(f, t, values, labels)
    return StateVector(_euler(f, t, values, dt, labels), labels)


def step_rk4(f: Derivative, t: float, y, dt: float) -> StateVector:
    """Single classical fourth-order Runge-Kutta step."""
    if not dt > 0:
        raise ValueError("dt must be > 0")
    labels = _labels_for(y)
    values = _values_for(y)
    _eval(f, t, values, labels)
    return StateVector(_rk4(f, t, values, dt, labels), labels)


def step_rkf45(f: Derivative, t: float, y, dt: float) -> tuple[StateVector, tuple]:
    if not dt > 0:
        raise ValueError("dt must be > 0")
    labels = _labels_for(y)
    y4, err = _rkf45(f, t, _values_for(y), dt, labels)
    return StateVector(y4, labels), err


class _Guard:
    """Applies the negativity policy and finiteness check to an accepted state."""

    def __init__(self, labels, policy, log):
        self.labels = labels
        self.policy = policy
        self.log = log

    def __call__(self, t, y):
        if not math.isfinite(sum(y)):
            for v, label in zip(y, self.labels):
                if not math.isfinite(v):
                    raise NonFiniteError(f"stock {label!r} became non-finite at t={t!r}",
                                         stock=label, time=t)
        if min(y) >= 0.0:
            return y
        out = list(y)
        for i, v in enumerate(y):
            if v < 0.0:
                label = self.labels[i]
                if self.policy == "reject":
                    raise NegativeStockError(
                        f"stock {label!r} went negative ({v!r}) at t={t!r}", stock=label, time=t)
                self.log.clamps.append(ClampEvent(t, label, v))
                logger.debug("clamped %s=%r to 0 at t=%r", label, v, t)
                out[i] = 0.0
        return tuple(out)


def _substeps(span, dt):
    ratio = span / dt
    n = round(ratio)
    if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
        n = max(1, math.ceil(ratio))
    return n


def integrate(f: Derivative, y0, cfg: IntegrationConfig) -> Trajectory:
    """Integrate ``f`` from ``y0`` over ``[cfg.t0, cfg.t_end]``.

    The state is sampled at ``cfg.record_times()``. Fixed-step methods split
    each record interval into equal sub-steps no longer than ``cfg.dt``; the
    adaptive method shortens steps to land exactly on record times.

    Raises
    ------
    NonFiniteError
        A derivative or state component became NaN/Inf.
    NegativeStockError
        A stock went below zero under ``negativity_policy='reject'``.
    StepSizeUnderflow
        rkf45 needed a step below ``cfg.dt_min``.
    """
    labels = _labels_for(y0)
    y = _values_for(y0)
    for v, label in zip(y, labels):
        if not math.isfinite(v):
            raise NonFiniteError(f"initial value of {label!r} is not finite", stock=label, time=cfg.t0)

    _eval(f, cfg.t0, y, labels)

    log = StepLog()
    guard = _Guard(labels, cfg.negativity_policy, log)
    record = cfg.record_times()
    times = [record[0]]
    values = [y]

    if cfg.method == "rkf45":
        _adaptive(f, y, record, cfg, labels, guard, log, times, values)
    else:
        stepper = _rk4 if cfg.method == "rk4" else _euler
        t = record[0]
        for t_next in record[1:]:
            n = _substeps(t_next - t, cfg.dt)
            h = (t_next - t) / n
            for i in range(n):
                ti = t + i * h
                y = guard(ti + h, stepper(f, ti, y, h, labels))
            log.accepted += n
            t = t_next
            times.append(t)
            values.append(y)

    return Trajectory(tuple(times), tuple(values), labels, log)


def _adaptive(f, y, record, cfg, labels, guard, log, times, values):
    h = min(max(cfg.dt, cfg.dt_min), cfg.dt_max)
    t = record[0]
    for t_next in record[1:]:
        while t < t_next:
            remaining = t_next - t
            clipped = h >= remaining
            step = remaining if clipped else h
            y_new, err = _rkf45(f, t, y, step, labels)
            ratio = 0.0
            for e, a, b in zip(err, y, y_new):
                scale = max(cfg.abs_tol, cfg.rel_tol * max(abs(a), abs(b)))
                ratio = max(ratio, e / scale)
            if not math.isfinite(ratio):
                ratio = math.inf
            if ratio <= 1.0:
                t = t_next if clipped else t + step
                y = guard(t, y_new)
                log.accepted += 1
                grow = 5.0 if ratio == 0.0 else min(5.0, max(0.2, 0.9 * ratio ** -0.2))
                # a clipped step says nothing about the natural step length; keep h
                if not clipped or step * grow > h:
                    h = min(cfg.dt_max, step * grow)
            else:
                log.rejected += 1
                shrink = 0.2 if math.isinf(ratio) else max(0.2, 0.9 * ratio ** -0.25)
                h = step * shrink
                if h < cfg.dt_min:
                    raise StepSizeUnderflow(
                        f"step size {h!r} fell below dt_min={cfg.dt_min!r} at t={t!r}",
                        time=t)
        times.append(t_next)
        values.append(y)
