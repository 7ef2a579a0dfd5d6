"""Command-line front end: ``eoq-subst {validate,solve,verify,sweep}``.

Exit status: 0 success, 2 invalid configuration or parameters, 3 solver
infeasibility or non-convergence, 4 oracle verification failure, 5 sweep
size cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys

from . import __version__
from .errors import (
    ConvergenceError,
    InfeasibleError,
    InfeasiblePolicyError,
    RegionError,
    SweepSizeError,
    UsageError,
    ValidationError,
    VerificationError,
)
from .model import FLAT_KEYS, SystemParams, validate
from .oracle import SearchRegion, verify
from .sensitivity import DEFAULT_MAX_ROWS, Axis, SweepSpec, run_sweep
from .solvers import FixedPointSettings, solve, solve_eoqiss_auto

TOOL = "eoq-subst"

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3
EXIT_VERIFY = 4
EXIT_CAP = 5

PARAM_KEYS = tuple(FLAT_KEYS)
DEFECT_KEYS = ("x1", "x2", "ep1", "ep2")
OPTION_KEYS = {
    "model", "regime", "format", "verify", "paper_verbatim", "fp_tolerance",
    "fp_max_iterations", "region", "ceiling", "sweep",
}
REGION_KEYS = {"tau_range", "cycle_range", "resolution", "refine_tolerance"}
SWEEP_KEYS = {"axes", "regimes", "max_rows", "verify_each"}
NUMERIC_KEYS = ("mode", "runout_time", "cycle_time", "lot1", "lot2",
                "transferred_volume", "cost")


class ConfigError(Exception):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def load_config(path: str, overrides: dict) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path} is not valid JSON: {exc}"]) from None
    if not isinstance(raw, dict):
        raise ConfigError([f"{path} must hold a JSON object"])
    raw.update({k: v for k, v in overrides.items() if v is not None})
    check_config(raw)
    return raw


def check_config(cfg: dict) -> None:
    """Collect every problem with a configuration before failing."""
    problems = []
    unknown = sorted(set(cfg) - set(PARAM_KEYS) - OPTION_KEYS)
    if unknown:
        problems.append(f"unknown keys: {', '.join(unknown)}")
    model = cfg.get("model", "eoqiss")
    if model not in ("basic", "eoqiss"):
        problems.append(f"model must be basic or eoqiss, got {model!r}")
    if cfg.get("regime", "auto") not in ("partial", "full", "none", "auto"):
        problems.append(f"regime must be partial, full, none or auto, got {cfg.get('regime')!r}")
    if cfg.get("format", "json") not in ("json", "csv"):
        problems.append(f"format must be json or csv, got {cfg.get('format')!r}")
    required = [k for k in PARAM_KEYS if model == "eoqiss" or k not in DEFECT_KEYS]
    missing = [k for k in required if k not in cfg]
    if missing:
        problems.append(f"missing keys: {', '.join(missing)}")
    for key in PARAM_KEYS:
        if key in cfg and (isinstance(cfg[key], bool) or not isinstance(cfg[key], (int, float))):
            problems.append(f"{key} must be a number, got {cfg[key]!r}")
    region = cfg.get("region", {})
    if not isinstance(region, dict):
        problems.append("region must be an object")
    elif set(region) - REGION_KEYS:
        problems.append(f"unknown region keys: {', '.join(sorted(set(region) - REGION_KEYS))}")
    sweep = cfg.get("sweep")
    if sweep is not None:
        if not isinstance(sweep, dict):
            problems.append("sweep must be an object")
        else:
            if set(sweep) - SWEEP_KEYS:
                problems.append(f"unknown sweep keys: {', '.join(sorted(set(sweep) - SWEEP_KEYS))}")
            for axis in sweep.get("axes", []):
                if not isinstance(axis, dict) or set(axis) != {"param", "values"}:
                    problems.append(f"each sweep axis needs exactly 'param' and 'values': {axis!r}")
    if problems:
        raise ConfigError(problems)


def params_from_config(cfg: dict) -> SystemParams:
    values = {"x1": math.inf, "x2": math.inf, "ep1": 0.0, "ep2": 0.0}
    values.update({k: cfg[k] for k in PARAM_KEYS if k in cfg})
    return SystemParams.from_flat(values)


def digest(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _settings(cfg) -> FixedPointSettings:
    return FixedPointSettings(
        tolerance=cfg.get("fp_tolerance", 1e-10),
        max_iterations=cfg.get("fp_max_iterations", 100),
    )


def _region(cfg, report) -> SearchRegion:
    spec = cfg.get("region", {})
    base = SearchRegion.around(report.policy)
    return SearchRegion(
        tau_range=tuple(spec.get("tau_range", base.tau_range)),
        cycle_range=tuple(spec.get("cycle_range", base.cycle_range)),
        resolution=spec.get("resolution", base.resolution),
        refine_tolerance=spec.get("refine_tolerance", base.refine_tolerance),
    )


def _num(x):
    if isinstance(x, bool) or x is None:
        return "" if x is None else str(x).lower()
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _flatten(d: dict, prefix="") -> dict:
    out = {}
    for key, value in d.items():
        if isinstance(value, dict):
            out.update(_flatten(value, f"{prefix}{key}_"))
        else:
            out[f"{prefix}{key}"] = value
    return out


def _meta(command, cfg):
    return {
        "tool": TOOL,
        "version": __version__,
        "command": command,
        "config_digest": digest(cfg),
    }


def _emit(fmt: str, meta: dict, rows: list[dict], out, key="report") -> None:
    if fmt == "json":
        payload = dict(meta)
        payload[key] = rows[0] if key == "report" else rows
        out.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        return
    for k in sorted(meta):
        out.write(f"# {k}={meta[k] if not isinstance(meta[k], (dict, list)) else json.dumps(meta[k], sort_keys=True)}\n")
    flat = [_flatten(r) for r in rows]
    columns = list(flat[0]) if flat else []
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for r in flat:
        writer.writerow([_num(r.get(c)) for c in columns])
    out.write(buf.getvalue())


def _solve(cfg, params, paper_verbatim):
    model = cfg.get("model", "eoqiss")
    regime = cfg.get("regime", "auto")
    if model == "eoqiss" and regime == "auto":
        return solve_eoqiss_auto(params, _settings(cfg), paper_verbatim=paper_verbatim,
                                 cross_check=False)
    return solve(params, model, regime, _settings(cfg), paper_verbatim=paper_verbatim)


def _label(code: str) -> str:
    return f"assumption {code[1:]} ({code})" if code.startswith("A") else code


def _violations_text(violations):
    return "\n".join(f"  {_label(v.assumption)} {v.field}: {v.message}" for v in violations)


def _check_params(cfg, params, err) -> bool:
    violations = validate(params, defects=cfg.get("model", "eoqiss") == "eoqiss")
    if violations:
        err.write("invalid parameters:\n" + _violations_text(violations) + "\n")
        return False
    return True


def cmd_validate(cfg, args, out, err) -> int:
    params = params_from_config(cfg)
    violations = validate(params, defects=cfg.get("model", "eoqiss") == "eoqiss")
    payload = dict(_meta("validate", cfg))
    payload["violations"] = [
        {"assumption": v.assumption, "field": v.field, "message": v.message} for v in violations
    ]
    out.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return EXIT_INVALID if violations else EXIT_OK


def cmd_solve(cfg, args, out, err, command="solve") -> int:
    params = params_from_config(cfg)
    if not _check_params(cfg, params, err):
        return EXIT_INVALID
    paper_verbatim = bool(cfg.get("paper_verbatim", False))
    report = _solve(cfg, params, paper_verbatim)
    do_verify = command == "verify" or cfg.get("verify", False)
    if do_verify:
        ceiling = cfg.get("ceiling", 1e-4)
        try:
            report = verify(report, params, _region(cfg, report), ceiling=ceiling)
        except VerificationError as exc:
            payload = dict(_meta(command, cfg))
            payload["error"] = str(exc)
            payload["residual"] = exc.residual
            payload["solver_policy"] = [exc.solver_policy.runout_time, exc.solver_policy.cycle_time]
            payload["oracle_policy"] = [exc.oracle_policy.runout_time, exc.oracle_policy.cycle_time]
            out.write(json.dumps(payload, indent=2, sort_keys=True) + "\n")
            err.write(f"verification failed: {exc}\n")
            return EXIT_VERIFY
    meta = _meta(command, cfg)
    if command == "verify":
        meta["ceiling"] = cfg.get("ceiling", 1e-4)
    _emit(cfg.get("format", "json"), meta, [report.as_dict()], out)
    return EXIT_OK


def cmd_verify(cfg, args, out, err) -> int:
    return cmd_solve(cfg, args, out, err, command="verify")


def sweep_spec(cfg) -> SweepSpec:
    sweep = cfg.get("sweep")
    if sweep is None:
        raise UsageError("configuration has no sweep section")
    axes = [Axis.of(a["param"], a["values"]) for a in sweep.get("axes", [])]
    return SweepSpec(
        base=params_from_config(cfg),
        axes=tuple(axes),
        regimes=tuple(sweep.get("regimes", [cfg.get("regime", "auto")])),
        model=cfg.get("model", "eoqiss"),
        max_rows=sweep.get("max_rows", DEFAULT_MAX_ROWS),
    )


def cmd_sweep(cfg, args, out, err) -> int:
    try:
        spec = sweep_spec(cfg)
    except (UsageError, KeyError) as exc:
        err.write(f"invalid sweep: {exc}\n")
        return EXIT_INVALID
    if spec.size > spec.max_rows:
        err.write(f"sweep has {spec.size} rows, cap is {spec.max_rows}\n")
        return EXIT_CAP
    verify_each = bool(cfg.get("sweep", {}).get("verify_each", cfg.get("verify", False)))
    rows = run_sweep(spec, verify_each, _settings(cfg),
                     paper_verbatim=bool(cfg.get("paper_verbatim", False)))
    meta = _meta("sweep", cfg)
    meta["model"] = spec.model
    meta["regimes"] = list(spec.regimes)
    meta["base"] = spec.base.to_flat()
    meta["axes"] = [{"param": list(a.names), "values": [list(v) for v in a.values]}
                    for a in spec.axes]
    meta["rows"] = len(rows)
    records = []
    for r in rows:
        rec = {k: r.point[k] for k in r.point}
        rec.update(
            regime=r.regime, status=r.status, mode=r.mode, runout_time=r.runout_time,
            cycle_time=r.cycle_time, lot1=r.lot1, lot2=r.lot2, tac=r.tac,
            theorem1_ok=r.theorem1_ok, theorem2_ok=r.theorem2_ok,
            oracle_residual=r.oracle_residual, note=r.note,
        )
        records.append(rec)
    _emit(cfg.get("format", "json"), meta, records, out, key="rows")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=TOOL,
        description="Optimal two-product inventory policies under one-way substitution.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, metavar="PATH", help="JSON configuration file")
        p.add_argument("--model", choices=("basic", "eoqiss"))
        p.add_argument("--regime", choices=("partial", "full", "none", "auto"))
        p.add_argument("--format", choices=("json", "csv"))
        p.add_argument("--verify", action="store_true", default=None,
                       help="check the result against the simulation oracle")
        p.add_argument("--paper-verbatim", action="store_true", default=None,
                       help="use the closed forms exactly as published")
        p.add_argument("--seed-region", nargs=4, type=float,
                       metavar=("TAU_LO", "TAU_HI", "T_LO", "T_HI"),
                       help="oracle search box; shorthand for --tau-range and --cycle-range")
        p.add_argument("--tau-range", nargs=2, type=float, metavar=("LO", "HI"))
        p.add_argument("--cycle-range", nargs=2, type=float, metavar=("LO", "HI"))
        p.add_argument("--resolution", type=int)
        p.add_argument("--ceiling", type=float, help="largest accepted oracle residual")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override one configuration key (repeatable)")
    return parser


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    overrides = {
        "model": args.model,
        "regime": args.regime,
        "format": args.format,
        "verify": args.verify,
        "paper_verbatim": args.paper_verbatim,
        "ceiling": args.ceiling,
    }
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            err.write(f"--set expects KEY=VALUE, got {item!r}\n")
            return EXIT_INVALID
        overrides[key] = _parse_value(value)
    try:
        cfg = load_config(args.config, overrides)
        region = dict(cfg.get("region", {}))
        if args.seed_region:
            region["tau_range"] = args.seed_region[:2]
            region["cycle_range"] = args.seed_region[2:]
        if args.tau_range:
            region["tau_range"] = args.tau_range
        if args.cycle_range:
            region["cycle_range"] = args.cycle_range
        if args.resolution:
            region["resolution"] = args.resolution
        if region:
            cfg["region"] = region
    except ConfigError as exc:
        err.write("invalid configuration:\n" + "".join(f"  {p}\n" for p in exc.problems))
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](cfg, args, out, err)
    except ValidationError as exc:
        err.write("invalid parameters:\n" + _violations_text(exc.violations) + "\n")
        return EXIT_INVALID
    except (InfeasibleError, ConvergenceError, InfeasiblePolicyError) as exc:
        err.write(f"solver failed: {exc}\n")
        return EXIT_INFEASIBLE
    except SweepSizeError as exc:
        err.write(f"{exc}\n")
        return EXIT_CAP
    except (RegionError, UsageError, ValueError) as exc:
        err.write(f"invalid configuration: {exc}\n")
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
