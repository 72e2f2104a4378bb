"""Scenario files, parameter paths and self-describing header blocks.

A scenario file is JSON with a top-level ``scenarios`` list::

    {"scenarios": [
        {"name": "baseline",
         "params": {"s0": "default", "lambda_t": "default", "lambda_n": 0.22,
                    "mu_n": "default", "b": 1.0, "s_bar": 1.0, "Np_bar": 100.0,
                    "c_mode": "off", "lambda_mn": 0.0, "lambda_a": "default",
                    "mu_m": "default", "A_input": "default"},
         "initial": {"N": 100.0, "Np": 0.0, "M": 0.0},
         "integration": {"t_end": 100.0, "dt": 0.005}}
    ]}

Every parameter must be present, either as a value or as ``"default"``;
``b``, ``s_bar`` and ``Np_bar`` have no published value and must be numbers.
Unknown keys anywhere are rejected.
"""

from __future__ import annotations

import json
from dataclasses import fields
from pathlib import Path

from .engine import IntegrationConfig
from .model import (EXPLICIT_REQUIRED, LABELS, SOURCED_VALUES, PARAMETER_NAMES,
                    ParameterSet, ScenarioSpec, TCellState)

INITIAL_DEFAULT = TCellState(100.0, 0.0, 0.0)
INTEGRATION_NAMES = tuple(f.name for f in fields(IntegrationConfig))
_INITIAL_TAGS = {"N": "N0", "Np": "Np0", "M": "M0"}


class ConfigError(ValueError):
    """Invalid scenario, sweep or override input; ``key`` names the culprit."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


def _check_keys(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be an object", key=where)
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}; "
                          f"allowed: {', '.join(allowed)}", key=f"{where}.{unknown[0]}")


def scenario_from_dict(d: dict) -> ScenarioSpec:
    _check_keys(d, ("name", "params", "initial", "integration"), "scenario")
    name = d.get("name")
    if not isinstance(name, str) or not name:
        raise ConfigError("scenario needs a non-empty 'name'", key="name")
    where = f"scenario {name!r}"

    raw = d.get("params")
    if raw is None:
        raise ConfigError(f"{where}: missing 'params'", key="params")
    _check_keys(raw, PARAMETER_NAMES, f"{where} params")
    missing = [k for k in PARAMETER_NAMES if k not in raw]
    if missing:
        raise ConfigError(f"{where}: params must list every field (value or \"default\"); "
                          f"missing: {', '.join(missing)}", key=f"params.{missing[0]}")
    values, defaulted = {}, []
    for key in PARAMETER_NAMES:
        v = raw[key]
        if v == "default":
            if key in EXPLICIT_REQUIRED:
                raise ConfigError(f"{where}: params.{key} has no published value and must be "
                                  f"set explicitly", key=f"params.{key}")
            if key not in SOURCED_VALUES:
                defaulted.append(key)
            continue
        values[key] = v
    try:
        params = ParameterSet(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}", key="params") from None

    raw_init = d.get("initial", "default")
    init = dict(zip(LABELS, INITIAL_DEFAULT.as_tuple()))
    if raw_init == "default":
        defaulted += [_INITIAL_TAGS[k] for k in LABELS]
    else:
        _check_keys(raw_init, LABELS, f"{where} initial")
        for k in LABELS:
            v = raw_init.get(k, "default")
            if v == "default":
                defaulted.append(_INITIAL_TAGS[k])
            elif isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{where}: initial.{k} must be a number", key=f"initial.{k}")
            else:
                init[k] = float(v)

    raw_int = d.get("integration", {})
    _check_keys(raw_int, INTEGRATION_NAMES, f"{where} integration")
    try:
        integration = IntegrationConfig(**raw_int)
        return ScenarioSpec(name, params, TCellState(**init), integration, tuple(defaulted))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}", key="integration") from None


def scenario_to_dict(s: ScenarioSpec) -> dict:
    return {
        "name": s.name,
        "params": s.params.as_dict(),
        "initial": dict(zip(LABELS, s.initial.as_tuple())),
        "integration": {k: getattr(s.integration, k) for k in INTEGRATION_NAMES},
    }


def load_scenarios(path) -> list[ScenarioSpec]:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc}", key="scenario-file") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}", key="scenario-file") from None
    _check_keys(doc, ("scenarios",), "scenario file")
    items = doc.get("scenarios")
    if not isinstance(items, list) or not items:
        raise ConfigError("scenario file needs a non-empty 'scenarios' list", key="scenarios")
    out = [scenario_from_dict(d) for d in items]
    names = [s.name for s in out]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ConfigError(f"duplicate scenario name(s): {', '.join(dupes)}", key="name")
    return out


def dump_scenarios(scenarios, path) -> None:
    doc = {"scenarios": [scenario_to_dict(s) for s in scenarios]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


# --- parameter paths ------------------------------------------------------

def resolve_path(path: str) -> tuple[str, str]:
    """Normalize a parameter path to ``(section, field)``.

    Bare names and ``params.<name>`` address ParameterSet fields;
    ``initial.N`` / ``initial.Np`` / ``initial.M`` address initial stocks.
    """
    section, _, name = path.rpartition(".")
    section = section or "params"
    if section == "params" and name in PARAMETER_NAMES:
        return section, name
    if section == "initial" and name in LABELS:
        return section, name
    raise ConfigError(f"unknown parameter path {path!r}; parameters: {', '.join(PARAMETER_NAMES)}; "
                      f"initial stocks: {', '.join('initial.' + k for k in LABELS)}", key=path)


def get_value(s: ScenarioSpec, path: str):
    section, name = resolve_path(path)
    return getattr(s.params if section == "params" else s.initial, name)


def parse_value(path: str, text: str):
    section, name = resolve_path(path)
    if section == "params" and name == "c_mode":
        return text.strip()
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"value {text!r} for {path} is not a number", key=path) from None


def set_value(s: ScenarioSpec, path: str, value) -> ScenarioSpec:
    """Copy of ``s`` with one parameter or initial stock replaced."""
    section, name = resolve_path(path)
    tag = name if section == "params" else _INITIAL_TAGS[name]
    remaining = tuple(x for x in s.non_paper_defaults if x != tag)
    try:
        if section == "params":
            return s.with_(params=s.params.with_(**{name: value}), non_paper_defaults=remaining)
        init = dict(zip(LABELS, s.initial.as_tuple()))
        init[name] = float(value)
        return s.with_(initial=TCellState(**init), non_paper_defaults=remaining)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot set {path}={value!r}: {exc}", key=path) from None


# --- header blocks --------------------------------------------------------

def _fmt(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def header_lines(s: ScenarioSpec, extra: dict | None = None) -> list[str]:
    """``# key = value`` lines fully describing ``s`` (plus ``extra`` entries)."""
    lines = [f"# scenario = {s.name}"]
    lines += [f"# params.{k} = {_fmt(v)}" for k, v in s.params.as_dict().items()]
    lines += [f"# initial.{k} = {_fmt(v)}" for k, v in zip(LABELS, s.initial.as_tuple())]
    lines += [f"# integration.{k} = {_fmt(getattr(s.integration, k))}" for k in INTEGRATION_NAMES]
    for k, v in (extra or {}).items():
        lines.append(f"# {k} = {v}")
    lines.append(f"# non-paper-defaults: {', '.join(s.non_paper_defaults)}")
    return lines


def read_header(path) -> dict:
    """Parse the leading ``#`` comment block of an output file into a dict."""
    out = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            body = line[1:].strip()
            if body.startswith("non-paper-defaults:"):
                rest = body.split(":", 1)[1].strip()
                out["non-paper-defaults"] = [x.strip() for x in rest.split(",") if x.strip()]
            elif " = " in body:
                k, v = body.split(" = ", 1)
                out[k.strip()] = v
    return out


def scenario_from_header(header: dict) -> ScenarioSpec:
    """Rebuild the scenario recorded in a header block."""
    params = {}
    for k in PARAMETER_NAMES:
        v = header[f"params.{k}"]
        params[k] = v if k == "c_mode" else float(v)
    init = {k: float(header[f"initial.{k}"]) for k in LABELS}
    integ = {}
    for k in INTEGRATION_NAMES:
        v = header[f"integration.{k}"]
        integ[k] = v if k in ("method", "negativity_policy") else float(v)
    return ScenarioSpec(header["scenario"], ParameterSet(**params), TCellState(**init),
                        IntegrationConfig(**integ), tuple(header.get("non-paper-defaults", ())))
