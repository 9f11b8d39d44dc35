"""Command-line entry point: ``xapp-cms <subcommand> ...``.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import harness
from .dataset import ColumnMapping, ConflictTable, dumps_table, generate_table, load_table, save_table
from .detect import ConflictCase, ConflictKind, Stores
from .errors import CmsError, ConfigError
from .harness import FIXTURES_ENV, builtin_tables, casestudy, plot_data, run
from .mitigate import (DEFAULT_BIG_M, DEFAULT_ZETA, Method, MitigationInput, PolicyConfig,
                       assign_weights, solve)
from .model import ParamRange, builtin_example_model, index_kpis
from .normalize import dumps_curves, load_curves, utility_curve, xapp_utility
from .predict import evaluate, fit, split_table
from .scenario import OracleConfig, load_scenario


def _ratios(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"weights must be comma-separated numbers: {text!r}")
    if not values or any(v < 0 or not math.isfinite(v) for v in values):
        raise argparse.ArgumentTypeError(f"weights must be finite non-negative numbers: {text!r}")
    return values


def _assignment(text: str) -> tuple[str, float]:
    name, sep, value = text.partition("=")
    try:
        if not sep or not name:
            raise ValueError
        return name.strip(), float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected PARAM=VALUE, got {text!r}") from None


def _write(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# subcommands ----------------------------------------------------------------------
def cmd_generate(args) -> int:
    if args.builtin:
        out = Path(args.output or ".")
        out.mkdir(parents=True, exist_ok=True)
        for table in builtin_tables(args.fixtures):
            path = out / f"{table.xapp}_{table.swept_param}.csv"
            save_table(_noisy(table, args.noise, args.seed), path)
            print(path)
        return 0
    if not (args.xapp and args.swept):
        raise ConfigError("generate needs --builtin or both --xapp and --swept")
    scenario = load_scenario(args.config) if args.config else None
    if scenario is None:
        specs, models, _ = builtin_example_model()
        spec = next((s for s in specs if s.id == args.xapp), None)
        if spec is None:
            raise ConfigError(f"unknown xApp {args.xapp}")
        ranges, fixed = {}, {}
    else:
        spec, models = scenario.spec(args.xapp), scenario.models
        ranges, fixed = dict(scenario.ranges), dict(scenario.fixed)
    fixed.update(dict(args.fixed or []))
    base = ranges.get(args.swept)
    lo = args.min if args.min is not None else (base.min if base else None)
    hi = args.max if args.max is not None else (base.max if base else None)
    step = args.step if args.step is not None else (base.step if base else 1.0)
    if lo is None or hi is None:
        raise ConfigError(f"no range for {args.swept}; pass --min and --max")
    table = generate_table(spec, models, args.swept, ParamRange(lo, hi, step), fixed)
    table = _noisy(table, args.noise, args.seed)
    if args.output:
        save_table(table, args.output)
    else:
        sys.stdout.write(dumps_table(table))
    return 0


def _noisy(table: ConflictTable, sigma: float, seed: int) -> ConflictTable:
    if not sigma:
        return table
    rng = np.random.default_rng(seed)
    kpis = {k: v + rng.normal(0.0, sigma, size=v.shape) for k, v in table.kpis.items()}
    return ConflictTable(table.xapp, table.swept_param, dict(table.params), kpis)


def _mapping(args) -> ColumnMapping | None:
    return ColumnMapping.load(args.mapping) if getattr(args, "mapping", None) else None


def cmd_validate(args) -> int:
    mapping = _mapping(args)
    expected = args.kpis.split(",") if args.kpis else None
    for path in args.tables:
        t = load_table(path, mapping, expected)
        print(f"{path}: ok  xapp={t.xapp} swept={t.swept_param} rows={len(t)} "
              f"range=[{t.grid[0]:g}, {t.grid[-1]:g}] kpis={','.join(t.kpis)}")
    return 0


def _kpi_defs(args):
    if getattr(args, "config", None):
        scenario = load_scenario(args.config)
        return index_kpis(scenario.specs), {s.id: s for s in scenario.specs}
    specs, _, _ = builtin_example_model()
    return index_kpis(specs), {s.id: s for s in specs}


def cmd_normalize(args) -> int:
    kpis, specs = _kpi_defs(args)
    table = load_table(args.table, _mapping(args))
    if table.xapp not in specs:
        raise ConfigError(f"table belongs to unknown xApp {table.xapp}")
    bounds = tuple(args.bounds) if args.bounds else None
    owned = [k for k in specs[table.xapp].kpis if k.id in table.kpis]
    curves = [utility_curve(table, k, bounds) for k in owned]
    combined = xapp_utility(table, owned, bounds)
    if combined is not None and len(curves) > 1:
        curves.append(combined)
    _write(dumps_curves(curves), args.output)
    return 0


def cmd_fit(args) -> int:
    tables = builtin_tables(args.fixtures) if args.builtin else []
    tables += [load_table(p, _mapping(args)) for p in args.tables]
    if not tables:
        raise ConfigError("fit needs table files or --builtin")
    rows = []
    for t in tables:
        for kpi in t.kpis:
            full = fit(t, kpi, args.degree)
            m = evaluate(full, t)
            rows.append({"xapp": t.xapp, "kpi": kpi, "param": t.swept_param,
                         "degree": args.degree, "split": "full",
                         "evs": m.evs, "r2": m.r2, "mse": m.mse})
            train, test = split_table(t)
            m = evaluate(fit(train, kpi, args.degree), test)
            rows.append({"xapp": t.xapp, "kpi": kpi, "param": t.swept_param,
                         "degree": args.degree, "split": "holdout",
                         "evs": m.evs, "r2": m.r2, "mse": m.mse})
    if args.json:
        sys.stdout.write(_json(rows))
        return 0
    print(f"{'xapp':<5} {'kpi':<5} {'param':<5} {'split':<8} {'EVS':>8} {'R2':>8} {'MSE':>10}")
    for r in rows:
        print(f"{r['xapp']:<5} {r['kpi']:<5} {r['param']:<5} {r['split']:<8} "
              f"{r['evs']:>8.4f} {r['r2']:>8.4f} {r['mse']:>10.3g}")
    print("full: trained and scored on every row; holdout: every 5th row held out (80/20)")
    return 0


def _scenario(args):
    scenario = load_scenario(args.scenario)
    if args.analytic:
        scenario = scenario.with_oracle(OracleConfig("analytic"))
    elif args.tables or args.regressor:
        kind = "table" if args.tables else "regressor"
        files = args.tables or args.regressor
        scenario = scenario.with_oracle(
            OracleConfig(kind, tuple(load_table(p, _mapping(args)) for p in files)))
    return replace(scenario, method=Method(args.method)) if getattr(args, "method", None) \
        else scenario


def cmd_detect(args) -> int:
    scenario = _scenario(args)
    stores = Stores.load(args.stores) if args.stores else None
    log = run(scenario, stores)
    for r in log.cases:
        c = r["case"]
        tail = f" (after {r['trigger']} alert)" if "trigger" in r else ""
        print(f"t={c['detected_at']} {c['kind']} conflict over {c['param']}: "
              f"{', '.join(c['involved'])}{tail}")
    if not log.cases:
        print("no conflicts")
    if args.stores_out:
        log.stores.dump(args.stores_out)
    return 0


def cmd_run(args) -> int:
    scenario = _scenario(args)
    stores = Stores.load(args.stores) if args.stores else None
    log = run(scenario, stores)
    _write(log.dumps(), args.output)
    if args.stores_out:
        log.stores.dump(args.stores_out)
    if args.summary:
        print(log.summary(), file=sys.stderr if args.output is None else sys.stdout)
    return 0


def cmd_mitigate(args) -> int:
    curves = []
    for path in args.curves:
        loaded = load_curves(path)
        # a file with several curves for one xApp ends with the combined one
        curves.append(loaded[-1])
    xapps = tuple(c.xapp for c in curves)
    param = curves[0].param
    case = ConflictCase(ConflictKind.DIRECT, param, xapps, 0)
    if args.weights is not None:
        if len(args.weights) != len(xapps):
            raise ConfigError(f"{len(args.weights)} weights for {len(xapps)} xApps")
        weights = assign_weights(case, PolicyConfig(dict(zip(xapps, args.weights))))
    else:
        weights = assign_weights(case, PolicyConfig())
    inp = MitigationInput(case, {c.xapp: c for c in curves}, weights, args.zeta, args.big_m)
    method = Method(args.method)
    kwargs = {"shift": not args.no_shift} if method is Method.NSWF else {}
    result = solve(inp, method, **kwargs)
    if args.json:
        sys.stdout.write(_json(result.to_record()))
        return 0
    print(f"method {method.value}: {param} = {result.p_opt:g} "
          f"(objective {result.objective:.6g}, {result.satisfied_count}/{len(xapps)} satisfied)")
    print(f"{'xapp':<6} {'weight':>7} {'utility':>9} {'threshold':>9} {'distance':>9}  satisfied")
    for o in result.outcomes:
        print(f"{o.xapp:<6} {weights[o.xapp]:>7.3g} {o.utility:>9.4f} {o.threshold:>9.4f} "
              f"{o.distance:>9.4f}  {o.satisfied}")
    return 0


def cmd_casestudy(args) -> int:
    report = casestudy(args.case, args.method, args.weights, args.fixtures, args.source)
    if args.json:
        sys.stdout.write(_json(report.to_record()))
    else:
        print(report.format())
    return 0


def cmd_report(args) -> int:
    reports = [casestudy(c, fixtures=args.fixtures, source=args.source) for c in args.cases]
    if args.plot_data:
        out = Path(args.plot_data)
        out.mkdir(parents=True, exist_ok=True)
        for r in reports:
            (out / f"case_{r.case_id}.csv").write_text(plot_data(r), encoding="utf-8")
    if args.json:
        sys.stdout.write(_json(harness.report_record(reports)))
        return 0
    for r in reports:
        print(r.format())
        print()
    if args.plot_data:
        print(f"plot data written to {args.plot_data}")
    return 0


# parser -----------------------------------------------------------------------------
def _oracle_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--analytic", action="store_true", help="use the analytic KPI models")
    g.add_argument("--tables", nargs="+", metavar="TABLE",
                   help="use linear interpolation in these conflict tables")
    g.add_argument("--regressor", nargs="+", metavar="TABLE",
                   help="use polynomial regressors fitted on these tables")
    p.add_argument("--mapping", type=Path, help="column-mapping file for the tables")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xapp-cms",
        description="Conflict detection and QoS-aware mitigation for near-RT RIC xApps.",
        epilog=f"The fixture directory can be overridden with ${FIXTURES_ENV}.")
    parser.add_argument("--fixtures", type=Path, default=None,
                        help=f"fixture directory (default: ${FIXTURES_ENV} or the bundled one)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("generate", help="generate conflict tables from analytic models")
    p.add_argument("--builtin", action="store_true",
                   help="write every reference table of the builtin fixture into -o DIR")
    p.add_argument("--config", type=Path, help="scenario file providing models, ranges, fixed ICPs")
    p.add_argument("--xapp")
    p.add_argument("--swept", help="parameter to sweep")
    p.add_argument("--min", type=float)
    p.add_argument("--max", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--fixed", type=_assignment, action="append", metavar="PARAM=VALUE")
    p.add_argument("--noise", type=float, default=0.0,
                   help="stddev of Gaussian noise added to KPI values")
    p.add_argument("--seed", type=int, default=0, help="seed for --noise")
    p.add_argument("-o", "--output", type=Path)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("validate", help="check conflict-table files")
    p.add_argument("tables", nargs="+", type=Path)
    p.add_argument("--mapping", type=Path)
    p.add_argument("--kpis", help="comma-separated KPI columns that must be present")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("normalize", help="z-score a conflict table into utility curves")
    p.add_argument("table", type=Path)
    p.add_argument("--config", type=Path, help="scenario file with KPI thresholds")
    p.add_argument("--mapping", type=Path)
    p.add_argument("--bounds", nargs=2, type=float, metavar=("MIN", "MAX"),
                   help="fit and emit only this range of the swept parameter")
    p.add_argument("-o", "--output", type=Path, help="curve file to write (default: stdout)")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("fit", help="fit polynomial KPI predictors and report EVS/R2/MSE")
    p.add_argument("tables", nargs="*", type=Path)
    p.add_argument("--builtin", action="store_true", help="include the builtin reference tables")
    p.add_argument("--degree", type=int, default=4)
    p.add_argument("--mapping", type=Path)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("detect", help="replay a scenario and list detected conflicts")
    p.add_argument("scenario", type=Path)
    _oracle_flags(p)
    p.add_argument("--stores", type=Path, help="continue from a stores dump")
    p.add_argument("--stores-out", type=Path, help="write the final stores")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("mitigate", help="resolve one conflict from utility-curve files")
    p.add_argument("curves", nargs="+", type=Path, help="one curve file per involved xApp")
    p.add_argument("--method", choices=[m.value for m in Method], default="qacm")
    p.add_argument("--weights", type=_ratios, help="comma-separated priority ratios")
    p.add_argument("--zeta", type=float, default=DEFAULT_ZETA)
    p.add_argument("--big-m", type=float, default=DEFAULT_BIG_M)
    p.add_argument("--no-shift", action="store_true", help="NSWF without the positivity shift")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_mitigate)

    p = sub.add_parser("run", help="run a scenario through the control loop")
    p.add_argument("scenario", type=Path)
    _oracle_flags(p)
    p.add_argument("--method", choices=[m.value for m in Method])
    p.add_argument("--stores", type=Path, help="continue from a stores dump")
    p.add_argument("--stores-out", type=Path)
    p.add_argument("-o", "--output", type=Path, help="RunLog file (default: stdout)")
    p.add_argument("--summary", action="store_true", help="print a summary table")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("casestudy", help="reproduce one case study (A-D)")
    p.add_argument("case", choices=list(harness.CASE_IDS) + [c.lower() for c in harness.CASE_IDS])
    p.add_argument("--method", choices=[m.value for m in Method])
    p.add_argument("--weights", type=_ratios)
    p.add_argument("--source", choices=["auto", "published", "regenerated"], default="auto")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_casestudy)

    p = sub.add_parser("report", help="all case studies, optionally with plot data")
    p.add_argument("--cases", nargs="+", default=list(harness.CASE_IDS),
                   choices=list(harness.CASE_IDS))
    p.add_argument("--source", choices=["auto", "published", "regenerated"], default="auto")
    p.add_argument("--plot-data", type=Path, metavar="DIR")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CmsError as exc:
        print(exc.describe(), file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error [io]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
