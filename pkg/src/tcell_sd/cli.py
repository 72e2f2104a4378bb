"""Command-line entry point.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import analysis
from .analysis import FitError, SensitivityUndefined
from .engine import METHODS, IntegrationError
from .model import PARAMETER_UNITS, ModelError, builtin_scenarios, get_preset
from .output import (plot_blocks, read_table, write_metrics, write_rows, write_sweep,
                     write_trajectory, fmt)
from .scenarios import (ConfigError, dump_scenarios, header_lines, load_scenarios,
                        parse_value, read_header, resolve_path, scenario_from_header, set_value)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _add_scenario_args(p):
    p.add_argument("--preset", help="builtin scenario name (see `presets`)")
    p.add_argument("--scenario-file", help="JSON scenario file")
    p.add_argument("--scenario", help="scenario name inside --scenario-file")
    p.add_argument("--from-header", metavar="CSV",
                   help="rebuild the scenario recorded in an output file's header block")
    p.add_argument("--t-end", type=float, help="end time in years")
    p.add_argument("--dt", type=float, help="fixed step / initial adaptive step in years")
    p.add_argument("--method", choices=METHODS)
    p.add_argument("--set", action="append", default=[], metavar="PATH=VALUE",
                   help="override a parameter or initial stock (repeatable)")
    p.add_argument("--out", default="out", help="output directory (default: out)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tcell-sd", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="integrate one scenario and write trajectory + metrics CSV")
    _add_scenario_args(p)
    p.add_argument("--metric", action="append", default=[], help="extra metric (repeatable)")

    p = sub.add_parser("sweep", help="cartesian parameter sweep")
    _add_scenario_args(p)
    p.add_argument("--axis", action="append", default=[], metavar="PATH=V1,V2,...")
    p.add_argument("--sweep-file", help="JSON file with 'axes' mapping and optional 'metrics'")
    p.add_argument("--metric", action="append", default=[])
    p.add_argument("--workers", type=int, default=1, help="processes for grid points")

    p = sub.add_parser("sensitivity", help="central finite-difference sensitivity")
    _add_scenario_args(p)
    p.add_argument("--parameter", required=True)
    p.add_argument("--metric", required=True)
    p.add_argument("--delta", type=float, default=1e-3, help="relative step (default 1e-3)")
    p.add_argument("--absolute", action="store_true", help="treat --delta as an absolute step")

    p = sub.add_parser("fit", help="bounded least-squares fit against a reference series")
    _add_scenario_args(p)
    p.add_argument("--free", action="append", default=[], metavar="PATH=LO,HI")
    p.add_argument("--reference", required=True, help="CSV with columns t,observable,value")

    p = sub.add_parser("plotdata", help="extract x/y blocks from a trajectory CSV")
    p.add_argument("csv")
    p.add_argument("--columns", required=True, help="x column followed by series, e.g. t,N,Np")
    p.add_argument("--output", help="write to file instead of stdout")

    p = sub.add_parser("presets", help="list builtin scenarios")
    p.add_argument("--dump", help="write all presets to a scenario file")
    return parser


def _scenario(args):
    sources = [x for x in (args.preset, args.scenario_file, args.from_header) if x]
    if len(sources) > 1:
        raise ConfigError("use only one of --preset, --scenario-file, --from-header", key="preset")
    if args.from_header:
        try:
            s = scenario_from_header(read_header(args.from_header))
        except OSError as exc:
            raise ConfigError(f"cannot read {args.from_header}: {exc}", key="from-header") from None
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{args.from_header}: incomplete or invalid header ({exc})",
                              key="from-header") from None
    elif args.preset:
        try:
            s = get_preset(args.preset)
        except KeyError as exc:
            raise ConfigError(exc.args[0], key="preset") from None
    elif args.scenario_file:
        scenarios = load_scenarios(args.scenario_file)
        if args.scenario:
            found = [s for s in scenarios if s.name == args.scenario]
            if not found:
                raise ConfigError(f"no scenario {args.scenario!r} in {args.scenario_file}; "
                                  f"available: {', '.join(s.name for s in scenarios)}", key="scenario")
            s = found[0]
        elif len(scenarios) == 1:
            s = scenarios[0]
        else:
            raise ConfigError("--scenario is required when the file holds several scenarios; "
                              f"available: {', '.join(s.name for s in scenarios)}", key="scenario")
    else:
        raise ConfigError("one of --preset, --scenario-file or --from-header is required", key="preset")

    for item in args.set:
        path, value = _split_assignment(item, "--set")
        s = set_value(s, path, parse_value(path, value))
    changes = {}
    if args.t_end is not None:
        changes["t_end"] = args.t_end
    if args.dt is not None:
        changes["dt"] = args.dt
    if args.method is not None:
        changes["method"] = args.method
    if changes:
        try:
            s = s.with_(integration=s.integration.with_(**changes))
        except ValueError as exc:
            raise ConfigError(str(exc), key=next(iter(changes))) from None
    return s


def _split_assignment(item, flag):
    path, sep, value = item.partition("=")
    if not sep or not path:
        raise ConfigError(f"{flag} expects PATH=VALUE, got {item!r}", key=flag)
    resolve_path(path.strip())
    return path.strip(), value


def _parse_axis(item):
    path, values = _split_assignment(item, "--axis")
    parts = [v for v in (x.strip() for x in values.split(",")) if v]
    if not parts:
        raise ConfigError(f"axis {path!r} has no values", key=path)
    return path, tuple(parse_value(path, v) for v in parts)


def cmd_run(args):
    s = _scenario(args)
    metrics = tuple(dict.fromkeys(analysis.DEFAULT_METRICS + tuple(args.metric)))
    result = analysis.run_scenario(s, metrics)
    out = Path(args.out)
    traj = write_trajectory(out / f"{s.name}_trajectory.csv", result)
    met = write_metrics(out / f"{s.name}_metrics.csv", result)
    clamps = len(result.trajectory.step_log.clamps)
    print(f"wrote {traj} ({len(result.trajectory)} rows)")
    print(f"wrote {met}")
    if clamps:
        print(f"note: {clamps} negative stock value(s) clamped to 0", file=sys.stderr)
    return EXIT_OK


def _load_sweep_file(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read sweep file {path}: {exc}", key="sweep-file") from None
    if not isinstance(doc, dict) or set(doc) - {"axes", "metrics"}:
        raise ConfigError("sweep file must be an object with keys 'axes' and optional 'metrics'",
                          key="sweep-file")
    axes = doc.get("axes")
    if not isinstance(axes, dict):
        raise ConfigError("'axes' must map parameter paths to value lists", key="axes")
    out = []
    for path, values in axes.items():
        resolve_path(path)
        if not isinstance(values, list) or not values:
            raise ConfigError(f"axis {path!r} needs a non-empty value list", key=path)
        out.append((path, tuple(values)))
    return out, list(doc.get("metrics", []))


def cmd_sweep(args):
    s = _scenario(args)
    axes, metrics = [], list(args.metric)
    if args.sweep_file:
        axes, file_metrics = _load_sweep_file(args.sweep_file)
        metrics = file_metrics + metrics
    axes += [_parse_axis(a) for a in args.axis]
    spec = analysis.SweepSpec(s, tuple(axes), tuple(dict.fromkeys(metrics)) or analysis.DEFAULT_METRICS)
    result = analysis.sweep(spec, workers=args.workers)
    path = write_sweep(Path(args.out) / f"{s.name}_sweep.csv", result)
    failed = sum(r.error is not None for r in result.rows)
    print(f"wrote {path} ({len(result.rows)} rows, {failed} failed)")
    return EXIT_OK


def cmd_sensitivity(args):
    s = _scenario(args)
    path = args.parameter
    section, name = resolve_path(path)
    value = analysis.sensitivity(s, path, args.metric, args.delta, absolute=args.absolute)
    p_units = PARAMETER_UNITS[name] if section == "params" else "cells"
    m_units = analysis.metric_units(args.metric)
    print(f"d({args.metric})/d({path}) = {fmt(value)} [{m_units} per {p_units}]")
    row = (s.name, path, args.metric, args.delta, "absolute" if args.absolute else "relative", value)
    columns = ("scenario", "parameter", "metric", "delta", "delta_mode", "sensitivity")
    out = write_rows(Path(args.out) / f"{s.name}_sensitivity.csv",
                     header_lines(s, {"output": "sensitivity"}), columns, [row])
    print(f"wrote {out}")
    return EXIT_OK


def _load_reference(path):
    columns, rows = read_table(path)
    need = ("t", "observable", "value")
    if any(c not in columns for c in need):
        raise ConfigError(f"reference CSV needs columns {', '.join(need)}", key="reference")
    ix = [columns.index(c) for c in need]
    try:
        return tuple((float(r[ix[0]]), r[ix[1]], float(r[ix[2]])) for r in rows)
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"bad reference row in {path}: {exc}", key="reference") from None


def cmd_fit(args):
    s = _scenario(args)
    free = []
    for item in args.free:
        path, bounds = _split_assignment(item, "--free")
        try:
            lo, hi = (float(x) for x in bounds.split(","))
        except ValueError:
            raise ConfigError(f"--free expects PATH=LO,HI, got {item!r}", key=path) from None
        free.append((path, lo, hi))
    try:
        reference = _load_reference(args.reference)
    except OSError as exc:
        raise ConfigError(f"cannot read reference {args.reference}: {exc}", key="reference") from None
    result = analysis.fit(analysis.FitSpec(s, tuple(free), reference))
    for path, v in result.values.items():
        print(f"{path} = {fmt(v)}")
    print(f"loss = {fmt(result.loss)} (best grid point {fmt(result.grid_best_loss)}, "
          f"{result.evaluations} evaluations)")
    rows = [(p, v) for p, v in result.values.items()] + [("loss", result.loss)]
    out = write_rows(Path(args.out) / f"{s.name}_fit.csv",
                     header_lines(result.scenario, {"output": "fit"}), ("name", "value"), rows)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_plotdata(args):
    try:
        columns, rows = read_table(args.csv)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.csv}: {exc}", key="csv") from None
    wanted = [c.strip() for c in args.columns.split(",") if c.strip()]
    if not wanted:
        raise ConfigError("--columns is empty", key="columns")
    try:
        text = plot_blocks(columns, rows, wanted)
    except KeyError as exc:
        raise ConfigError(exc.args[0], key="columns") from None
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_presets(args):
    presets = builtin_scenarios()
    for s in presets:
        print(s.name)
    if args.dump:
        dump_scenarios(presets, args.dump)
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "sensitivity": cmd_sensitivity,
    "fit": cmd_fit,
    "plotdata": cmd_plotdata,
    "presets": cmd_presets,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, ModelError) as exc:
        where = f" (stock {exc.stock}, t={exc.time!r})" if getattr(exc, "stock", None) else ""
        print(f"integration failed: {exc}{where}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SensitivityUndefined, FitError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI contract: never exit outside {0, 2, 3}
        print(f"unexpected failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
