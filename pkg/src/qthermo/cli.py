"""Command-line front end: run one protocol or a parameter sweep.

Commands:
    qthermo simulate <config.toml> [--out DIR] [--seed N] [--tol X]
                     [--set key=value ...]
    qthermo sweep    <config.toml> --grid "k=v1,v2;k2=w1,w2" [...]
    qthermo needle   <config.toml> [--out DIR]

Outputs are written only after a run succeeds: ledger.csv and summary.json
for the dynamical protocols, needle_profile.csv and summary.json for the
needle, sweep.csv for sweeps. All floats are serialized with 17 significant
digits, so identical (config, seed) pairs produce byte-identical files.
Wall-clock time goes to the error stream only, keeping the artifacts stable.

The output directory is resolved as: --out flag, then the QTHERMO_OUT
environment variable, then output.dir from the config, then ./qthermo_out.
"""

from __future__ import annotations

import argparse
import itertools
import json
import os
import sys
import time
from dataclasses import replace

from .config import (
    RunConfig,
    apply_assignment,
    load_config,
    parse_grid,
    parse_scalar,
)
from .errors import ConfigError, QThermoError
from .needle import FieldProfile, NeedleConfig, run_needle_cycle
from .protocols import (
    run_erasure,
    run_process_a,
    run_process_b,
    run_relaxation,
    run_section3_cycle,
)

OUT_DIR_ENV = "QTHERMO_OUT"
DEFAULT_OUT_DIR = "qthermo_out"

_RUNNERS = {
    "section3": run_section3_cycle,
    "process_a": run_process_a,
    "process_b": run_process_b,
    "erasure": run_erasure,
    "relax": run_relaxation,
}


def _fmt(x: float) -> str:
    return "%.17g" % float(x)


def _json_text(obj, indent: int = 0) -> str:
    """Serialize to JSON with fixed float formatting and key order."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = ",\n".join(
            f"{inner}{json.dumps(str(k))}: {_json_text(v, indent + 1)}"
            for k, v in obj.items())
        return "{\n" + items + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not len(obj):
            return "[]"
        items = ",\n".join(f"{inner}{_json_text(v, indent + 1)}" for v in obj)
        return "[\n" + items + "\n" + pad + "]"
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _fmt(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    # numpy scalars and anything else with a float view
    return _fmt(float(obj))


def _ledger_csv(rows) -> str:
    n_baths = len(rows[0].heat_cum)
    header = (["t", "E", "W_cum"]
              + [f"Q_cum_{j}" for j in range(n_baths)]
              + ["S"]
              + [f"sigma_{j}" for j in range(n_baths)]
              + ["event"])
    lines = [",".join(header)]
    for row in rows:
        cells = ([_fmt(row.t), _fmt(row.energy), _fmt(row.work_cum)]
                 + [_fmt(q) for q in row.heat_cum]
                 + [_fmt(row.entropy)]
                 + [_fmt(s) for s in row.sigma])
        event = row.event
        if any(ch in event for ch in ',"\n'):
            event = '"' + event.replace('"', '""') + '"'
        cells.append(event)
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _protocol_summary(cfg: RunConfig, report) -> dict:
    audit = report.audit
    summary = {
        "protocol": report.name,
        "policy": report.policy.variant if report.policy else None,
        "params": dict(report.params),
        "seed": cfg.seed,
        "net_work_extracted": report.net_work_extracted,
        "raw_work_extracted": report.raw_work_extracted,
        "net_heat": list(report.net_heat_per_bath),
        "measurement_charges": report.measurement_charges,
        "second_law_consistent": report.second_law_consistent,
        "max_sigma_violation": max(0.0, -audit.min_sigma),
        "audit": {
            "tol": audit.tol,
            "first_law_step_residual": audit.first_law_step_residual,
            "first_law_total_residual": audit.first_law_total_residual,
            "min_sigma": audit.min_sigma,
            "clausius_max_residual": audit.clausius_max_residual,
            "passed": audit.passed,
        },
        "outcomes": [int(o) for o in report.outcomes],
    }
    if report.erasure is not None:
        er = report.erasure
        summary["erasure"] = {
            "delta_S": er.delta_S,
            "delta_E_bath": er.delta_E_bath,
            "beta": er.beta,
            "satisfies_enen": er.satisfies_enen,
            "satisfies_lbound": er.satisfies_lbound,
            "enen_margin": er.enen_margin,
        }
    return summary


def _needle_summary(cfg: RunConfig, report) -> dict:
    return {
        "protocol": "needle",
        "params": dict(report.params),
        "net_work": report.net_work,
        "work_in": report.work_in,
        "work_out": report.work_out,
        "alignment_probability": report.alignment_probability,
        "reset_tv_distance": report.reset_tv_distance,
        "reset_ok": report.reset_ok,
        "cycle_closed": report.cycle_closed,
    }


def _needle_profile_csv(report) -> str:
    lines = ["z,F"]
    for z, f in zip(report.force_grid, report.force_values):
        lines.append(f"{_fmt(z)},{_fmt(f)}")
    return "\n".join(lines) + "\n"


def _execute(cfg: RunConfig) -> tuple[dict, dict]:
    """Run the configured protocol; return (summary, filename -> text)."""
    if cfg.protocol == "needle":
        p = dict(cfg.params)
        profile = FieldProfile.gaussian(b_max=p.pop("b_max", 1.0),
                                        width=p.pop("width", 1.0))
        report = run_needle_cycle(NeedleConfig(profile=profile, **p))
        summary = _needle_summary(cfg, report)
        files = {"needle_profile.csv": _needle_profile_csv(report),
                 "summary.json": _json_text(summary) + "\n"}
        return summary, files

    runner = _RUNNERS[cfg.protocol]
    kwargs = dict(cfg.params)
    kwargs["seed"] = cfg.seed
    if cfg.tol is not None:
        kwargs["tol"] = cfg.tol
    if cfg.sample_stride is not None:
        kwargs["sample_stride"] = cfg.sample_stride
    report = runner(**kwargs)
    summary = _protocol_summary(cfg, report)
    files = {"ledger.csv": _ledger_csv(report.rows),
             "summary.json": _json_text(summary) + "\n"}
    return summary, files


def _apply_cli_overrides(cfg: RunConfig, args) -> RunConfig:
    for item in getattr(args, "sets", []) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, value = item.partition("=")
        cfg = apply_assignment(cfg, key.strip(), parse_scalar(value.strip()))
    if getattr(args, "seed", None) is not None:
        cfg = replace(cfg, seed=args.seed)
    if getattr(args, "tol", None) is not None:
        cfg = replace(cfg, tol=args.tol)
    return cfg


def _resolve_out_dir(args, cfg: RunConfig) -> str:
    return (getattr(args, "out", None)
            or os.environ.get(OUT_DIR_ENV)
            or cfg.out_dir
            or DEFAULT_OUT_DIR)


def _write_files(out_dir: str, files: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for name, text in files.items():
        path = os.path.join(out_dir, name)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        print(f"wrote {path}")


def cmd_simulate(args) -> int:
    cfg = _apply_cli_overrides(load_config(args.config), args)
    _, files = _execute(cfg)
    _write_files(_resolve_out_dir(args, cfg), files)
    return 0


def cmd_needle(args) -> int:
    cfg = load_config(args.config)
    if cfg.protocol != "needle":
        raise ConfigError(
            f"the needle command needs protocol = \"needle\", "
            f"config says {cfg.protocol!r}")
    _, files = _execute(cfg)
    _write_files(_resolve_out_dir(args, cfg), files)
    return 0


_SWEEP_COLUMNS = ("protocol", "policy", "net_work_extracted",
                  "raw_work_extracted", "measurement_charges",
                  "net_heat_total", "second_law_consistent",
                  "max_sigma_violation", "error")


def _sweep_row(summary: dict) -> dict:
    if summary["protocol"] == "needle":
        return {
            "protocol": "needle",
            "policy": "",
            "net_work_extracted": _fmt(-summary["net_work"]),
            "raw_work_extracted": _fmt(-summary["net_work"]),
            "measurement_charges": "",
            "net_heat_total": "",
            "second_law_consistent": str(summary["cycle_closed"]).lower(),
            "max_sigma_violation": "",
        }
    return {
        "protocol": summary["protocol"],
        "policy": summary["policy"] or "",
        "net_work_extracted": _fmt(summary["net_work_extracted"]),
        "raw_work_extracted": _fmt(summary["raw_work_extracted"]),
        "measurement_charges": _fmt(summary["measurement_charges"]),
        "net_heat_total": _fmt(sum(summary["net_heat"])),
        "second_law_consistent": str(summary["second_law_consistent"]).lower(),
        "max_sigma_violation": _fmt(summary["max_sigma_violation"]),
    }


def cmd_sweep(args) -> int:
    base = _apply_cli_overrides(load_config(args.config), args)
    grid = parse_grid(args.grid)
    keys = [k for k, _ in grid]
    # key validation is fatal up front; per-point run failures are not
    for key, values in grid:
        apply_assignment(base, key, values[0])

    header = ["index"] + [f"grid.{k}" for k in keys] + list(_SWEEP_COLUMNS)
    lines = [",".join(header)]
    for index, combo in enumerate(itertools.product(*[v for _, v in grid])):
        point = base
        for key, value in zip(keys, combo):
            point = apply_assignment(point, key, value)
        point = replace(point, seed=base.seed + index)
        cells = [str(index)] + [str(v) for v in combo]
        try:
            summary, _ = _execute(point)
            row = _sweep_row(summary)
            row["error"] = ""
        except (QThermoError, ValueError) as exc:
            row = {c: "" for c in _SWEEP_COLUMNS}
            row["protocol"] = point.protocol
            row["error"] = str(exc).replace("\n", " ")
        for col in _SWEEP_COLUMNS:
            cell = row[col]
            if any(ch in cell for ch in ',"\n'):
                cell = '"' + cell.replace('"', '""') + '"'
            cells.append(cell)
        lines.append(",".join(cells))

    out_dir = _resolve_out_dir(args, base)
    _write_files(out_dir, {"sweep.csv": "\n".join(lines) + "\n"})
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qthermo",
        description="Thermodynamic audits of driven open quantum systems")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("config", help="TOML run configuration")
        p.add_argument("--out", help="output directory")

    sim = sub.add_parser("simulate", help="run one protocol")
    add_common(sim)
    sim.add_argument("--seed", type=int, help="override numerics.seed")
    sim.add_argument("--tol", type=float, help="override numerics.tol")
    sim.add_argument("--set", action="append", dest="sets", default=[],
                     metavar="KEY=VALUE", help="override any config field")
    sim.set_defaults(func=cmd_simulate)

    swp = sub.add_parser("sweep", help="run a parameter grid")
    add_common(swp)
    swp.add_argument("--grid", required=True,
                     metavar="K=V1,V2;K2=W1,W2", help="sweep specification")
    swp.add_argument("--seed", type=int, help="base seed (point i adds i)")
    swp.add_argument("--tol", type=float, help="override numerics.tol")
    swp.add_argument("--set", action="append", dest="sets", default=[],
                     metavar="KEY=VALUE", help="override any config field")
    swp.set_defaults(func=cmd_sweep)

    ndl = sub.add_parser("needle", help="run the classical readout cycle")
    add_common(ndl)
    ndl.set_defaults(func=cmd_needle)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    start = time.perf_counter()
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"invalid parameter: {exc}", file=sys.stderr)
        return 2
    except QThermoError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 3
    finally:
        elapsed = time.perf_counter() - start
        print(f"wall time: {elapsed:.3f} s", file=sys.stderr)


if __name__ == "__main__":
    raise SystemExit(main())
