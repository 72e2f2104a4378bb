"""Naive T-cell maintenance model.

Three stocks: thymic-origin naive cells ``N``, proliferation-origin naive
cells ``Np`` and memory cells ``M``. Time is in years; cell quantities are
abstract model units.

    dN/dt  = s0 exp(-lambda_t t) s(Np) - (lambda_n + mu_n g(Np)) N
    dNp/dt = lambda_n N + c h(N, Np) Np - mu_n Np + lambda_mn M
    dM/dt  = lambda_a A - mu_m M - lambda_mn M

with ``s(Np) = h(N, Np) = 1 / (1 + s_bar Np / Np_bar)`` and
``g(Np) = 1 + b Np / (1 + s_bar Np / Np_bar)``. When proliferation is on,
``c = mu_n (1 + 300 / Np)``, so the flow ``c h Np`` is evaluated as
``mu_n (Np + 300) h``, which is finite at ``Np = 0``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, fields, replace

from .engine import IntegrationConfig

LABELS = ("N", "Np", "M")
C_MODES = ("off", "density_dependent")

THYMIC_HALF_LIFE = 15.7    # years
PROLIFERATION_OFFSET = 300.0
TREC_EPS = 1e-12

# The four naive proliferation rates, with and without peripheral proliferation,
# with and without memory reversion.
PRESET_LAMBDA_N = (0.003, 0.005, 0.22, 2.1)
PRESET_C_MODES = ("off", "density_dependent")
PRESET_LAMBDA_MN = (0.0, 0.5)

# RK4 at dt=0.01 is unstable once proliferation holds Np near its equilibrium:
# the N decay rate lambda_n + mu_n g(Np) reaches ~285/yr with the preset constants.
PRESET_INTEGRATION = IntegrationConfig(t0=0.0, t_end=100.0, method="rk4", dt=0.005,
                                       record_interval=0.1)


class ModelError(ArithmeticError):
    """A model term evaluated to NaN or infinity."""

    def __init__(self, message, term=None, time=None):
        super().__init__(message)
        self.term = term
        self.time = time


@dataclass(frozen=True)
class ParameterSet:
    s0: float = 1.65
    lambda_t: float = math.log(2) / THYMIC_HALF_LIFE
    lambda_n: float = 0.22
    mu_n: float = 4.4
    b: float = 1.0
    s_bar: float = 1.0
    Np_bar: float = 100.0
    c_mode: str = "off"
    lambda_mn: float = 0.0
    lambda_a: float = 0.0
    mu_m: float = 0.05
    A_input: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if f.name == "c_mode":
                continue
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(f"parameter {f.name} must be a number, got {value!r}")
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"parameter {f.name} must be finite and >= 0, got {value!r}")
            object.__setattr__(self, f.name, float(value))
        if self.c_mode not in C_MODES:
            raise ValueError(f"c_mode must be one of {C_MODES}, got {self.c_mode!r}")
        if not self.Np_bar > 0:
            raise ValueError("Np_bar must be > 0")

    def with_(self, **changes) -> "ParameterSet":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


PARAMETER_NAMES = tuple(f.name for f in fields(ParameterSet))
# fields whose default is a stated constant of the model rather than a stand-in
SOURCED_VALUES = frozenset({"s0", "lambda_t", "mu_n", "mu_m"})
# unpublished constants that scenario files must spell out
EXPLICIT_REQUIRED = frozenset({"b", "s_bar", "Np_bar"})

PARAMETER_UNITS = {
    "s0": "cells/year",
    "lambda_t": "1/year",
    "lambda_n": "1/year",
    "mu_n": "1/year",
    "b": "1/cells",
    "s_bar": "dimensionless",
    "Np_bar": "cells",
    "c_mode": "switch",
    "lambda_mn": "1/year",
    "lambda_a": "1/year",
    "mu_m": "1/year",
    "A_input": "cells",
}


@dataclass(frozen=True)
class TCellState:
    N: float
    Np: float
    M: float

    def as_tuple(self) -> tuple:
        return (self.N, self.Np, self.M)

    @classmethod
    def from_values(cls, values) -> "TCellState":
        N, Np, M = values
        return cls(N, Np, M)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    params: ParameterSet = field(default_factory=ParameterSet)
    initial: TCellState = TCellState(100.0, 0.0, 0.0)
    integration: IntegrationConfig = field(default_factory=IntegrationConfig)
    # constants taken from stand-in defaults rather than stated by the user
    non_paper_defaults: tuple = ()

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise ValueError("scenario name must be a non-empty string")
        for label, v in zip(LABELS, self.initial.as_tuple()):
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"initial {label} must be finite and >= 0, got {v!r}")
        object.__setattr__(self, "non_paper_defaults", tuple(self.non_paper_defaults))

    def with_(self, **changes) -> "ScenarioSpec":
        return replace(self, **changes)


def raw_thymic_export(t: float, p: ParameterSet) -> float:
    """Thymic output before feedback, ``s0 * exp(-lambda_t * t)``."""
    return p.s0 * math.exp(-p.lambda_t * t)


def s_aux(Np: float, p: ParameterSet) -> float:
    """Thymic export multiplier, suppressed by a large proliferating pool."""
    return 1.0 / (1.0 + p.s_bar * Np / p.Np_bar)


def g_aux(Np: float, p: ParameterSet) -> float:
    """Death-rate multiplier for thymic-origin naive cells."""
    return 1.0 + p.b * Np / (1.0 + p.s_bar * Np / p.Np_bar)


def h_aux(N: float, Np: float, p: ParameterSet) -> float:
    # N is part of the signature but the formula depends on Np only
    return 1.0 / (1.0 + p.s_bar * Np / p.Np_bar)


def proliferation_flow(N: float, Np: float, p: ParameterSet) -> float:
    """Peripheral proliferation into ``Np``, ``c * h * Np`` with the 1/Np pole cancelled."""
    if p.c_mode == "off":
        return 0.0
    return p.mu_n * (Np + PROLIFERATION_OFFSET) * h_aux(N, Np, p)


def _rates(t, N, Np, M, p):
    thymic_in = raw_thymic_export(t, p) * s_aux(Np, p)
    naive_loss = (p.lambda_n + p.mu_n * g_aux(Np, p)) * N
    dN = thymic_in - naive_loss
    dNp = p.lambda_n * N + proliferation_flow(N, Np, p) - p.mu_n * Np + p.lambda_mn * M
    dM = p.lambda_a * p.A_input - p.mu_m * M - p.lambda_mn * M
    if not math.isfinite(dN + dNp + dM):
        _raise_nonfinite(t, N, Np, M, p)
    return dN, dNp, dM


def _raise_nonfinite(t, N, Np, M, p):
    terms = {
        "thymic export": lambda: raw_thymic_export(t, p) * s_aux(Np, p),
        "naive death and recruitment": lambda: (p.lambda_n + p.mu_n * g_aux(Np, p)) * N,
        "proliferation": lambda: proliferation_flow(N, Np, p),
        "proliferation-origin death": lambda: p.mu_n * Np,
        "memory reversion": lambda: p.lambda_mn * M,
        "memory inflow": lambda: p.lambda_a * p.A_input,
        "memory death": lambda: p.mu_m * M,
    }
    for term, value in terms.items():
        try:
            v = value()
        except (ArithmeticError, ValueError):
            v = math.nan
        if not math.isfinite(v):
            raise ModelError(f"model term {term!r} is not finite at t={t!r}", term=term, time=t)
    raise ModelError(f"rates overflowed at t={t!r}", time=t)


def derivatives(t: float, y: TCellState, p: ParameterSet) -> tuple:
    """Rates ``(dN, dNp, dM)`` in cells/year."""
    return _rates(t, y.N, y.Np, y.M, p)


def make_rhs(p: ParameterSet):
    """Derivative function over ``(N, Np, M)`` tuples, as the engine expects.

    Same arithmetic as :func:`derivatives` with the parameters bound to locals;
    this closure is the integration hot path.
    """
    s0, lambda_t, lambda_n, mu_n, b = p.s0, p.lambda_t, p.lambda_n, p.mu_n, p.b
    k = p.s_bar / p.Np_bar
    prolif = p.c_mode != "off"
    lambda_mn, mem_in, mem_out = p.lambda_mn, p.lambda_a * p.A_input, p.mu_m + p.lambda_mn
    exp, isfinite = math.exp, math.isfinite

    def rhs(t, y):
        N, Np, M = y
        damp = 1.0 / (1.0 + k * Np)
        dN = s0 * exp(-lambda_t * t) * damp - (lambda_n + mu_n * (1.0 + b * Np * damp)) * N
        flow = mu_n * (Np + PROLIFERATION_OFFSET) * damp if prolif else 0.0
        dNp = lambda_n * N + flow - mu_n * Np + lambda_mn * M
        dM = mem_in - mem_out * M
        if not isfinite(dN + dNp + dM):
            _raise_nonfinite(t, N, Np, M, p)
        return dN, dNp, dM
    return rhs


def trec_fraction(y: TCellState) -> float | None:
    """Thymic-origin share ``N / (N + Np)`` of the naive pool; None when the pool is empty."""
    naive = y.N + y.Np
    if naive < TREC_EPS:
        return None
    return y.N / naive


def thymic_export(t: float, y: TCellState, p: ParameterSet) -> float:
    """Realized thymic inflow into ``N``, including suppression by ``Np``."""
    return raw_thymic_export(t, p) * s_aux(y.Np, p)


def _fmt(x: float) -> str:
    return f"{x:g}"


def preset_name(lambda_n: float, c_mode: str, lambda_mn: float) -> str:
    c = "ON" if c_mode == "density_dependent" else "OFF"
    return f"ln{_fmt(lambda_n)}_c{c}_mn{_fmt(lambda_mn)}"


PRESET_DEFAULTED = ("b", "s_bar", "Np_bar", "lambda_a", "A_input", "N0", "Np0", "M0")


def builtin_scenarios() -> list[ScenarioSpec]:
    """All 16 presets: every value of lambda_n x proliferation on/off x memory reversion."""
    out = []
    for lam_n, c_mode, lam_mn in itertools.product(PRESET_LAMBDA_N, PRESET_C_MODES, PRESET_LAMBDA_MN):
        params = ParameterSet(lambda_n=lam_n, c_mode=c_mode, lambda_mn=lam_mn)
        out.append(ScenarioSpec(
            name=preset_name(lam_n, c_mode, lam_mn),
            params=params,
            initial=TCellState(100.0, 0.0, 0.0),
            integration=PRESET_INTEGRATION,
            non_paper_defaults=PRESET_DEFAULTED,
        ))
    return out


def get_preset(name: str) -> ScenarioSpec:
    presets = {s.name: s for s in builtin_scenarios()}
    try:
        return presets[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(presets)}") from None
