"""Command-line front end: ``qlbm run | sweep-shots | sweep-steps | compare-hybrid | validate-oracle | list-cases``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import engine
from .errors import ConfigurationError, QLBMError
from .experiments import (
    MODES,
    CaseConfig,
    _as_int,
    compare_hybrid,
    density_csv,
    load_config,
    shipped_cases,
    report_json,
    run_case,
    write_files,
)
from .lattice import run_digital

log = logging.getLogger("qlbm")


def parse_config(path: str) -> CaseConfig:
    """Load a JSON config file, or a shipped case by name when no such file exists."""
    if not Path(path).exists():
        cases = shipped_cases()
        if path in cases:
            return cases[path]
        raise ConfigurationError(f"config file {path!r} not found and no shipped case has that name")
    return load_config(path)


def _count(text: str) -> int:
    try:
        return _as_int("shots", text)
    except ConfigurationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _nonneg(text: str) -> int:
    try:
        v = _as_int("steps", text)
    except ConfigurationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _int_list(text: str) -> list[int]:
    try:
        return [_as_int("list entry", t.strip()) for t in text.split(",") if t.strip()]
    except ConfigurationError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _apply_overrides(cfg: CaseConfig, args) -> CaseConfig:
    return cfg.replace(
        seed=args.seed,
        shots=args.shots,
        steps=getattr(args, "steps", None),
        mode=getattr(args, "mode", None),
        output_dir=args.output_dir,
    )


def _out_dir(cfg: CaseConfig) -> Path:
    return Path(cfg.output_dir or Path("qlbm-output") / (cfg.name or "case"))


def _summary(report) -> str:
    lines = [f"MAPE {report.mape_percent:.4f}%  ({report.config.mode}, T={report.config.steps}, S={report.config.shots})"]
    if report.stats is not None:
        s = report.stats
        lines.append(
            f"  ucry {s.ucry}  rest {s.rest_steps}  selection meas {s.selection_measurements}"
            f"  pair meas {s.pair_measurements}  shifts {s.cyclic_shifts}  cnot-eq {s.cnot_equivalents}"
        )
    return "\n".join(lines)


def _sweep_csv(key: str, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([key, "mape_percent"])
    for k, m in sorted(rows):
        w.writerow([k, repr(float(m))])
    return buf.getvalue()


def cmd_run(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    report = run_case(cfg, backend=args.backend, threads=args.threads)
    out = _out_dir(cfg)
    write_files(out, {"density.csv": density_csv(report), "report.json": report_json(report)})
    print(_summary(report))
    print(f"wrote {out / 'density.csv'} and {out / 'report.json'}")
    return 0


def _sweep(args, key: str, values: list[int]) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    values = sorted(set(values))
    if not values:
        raise ConfigurationError(f"empty {key} list")
    files, rows = {}, []
    for v in values:
        report = run_case(cfg.replace(**{key: v}), backend=args.backend, threads=args.threads)
        files[f"{key}_{v}/density.csv"] = density_csv(report)
        files[f"{key}_{v}/report.json"] = report_json(report)
        rows.append((v, report.mape_percent))
        print(f"{key}={v}: MAPE {report.mape_percent:.4f}%")
    files["sweep.csv"] = _sweep_csv(key, rows)
    out = _out_dir(cfg)
    write_files(out, files)
    print(f"wrote {out / 'sweep.csv'}")
    return 0


def cmd_sweep_shots(args) -> int:
    return _sweep(args, "shots", args.shots_list)


def cmd_sweep_steps(args) -> int:
    return _sweep(args, "steps", args.steps_list)


def cmd_compare_hybrid(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    res = compare_hybrid(cfg, backend=args.backend, threads=args.threads)
    summary = {
        "mape_dynamic": res["mape_dynamic"],
        "mape_hybrid": res["mape_hybrid"],
        "chi2": res["chi2"],
        "gate_stats_dynamic": res["dynamic"].stats.to_dict(),
        "gate_stats_hybrid": res["hybrid"].stats.to_dict(),
        "gate_stats_delta": res["gate_stats_delta"],
        "selection_measurements_saved": res["selection_measurements_saved"],
        "config": cfg.to_dict(),
    }
    out = _out_dir(cfg)
    write_files(out, {"compare.json": json.dumps(summary, indent=2, sort_keys=True) + "\n"})
    chi = res["chi2"]
    print(f"MAPE dynamic {res['mape_dynamic']:.4f}%  hybrid {res['mape_hybrid']:.4f}%")
    if chi["statistic"] is None:
        print("chi-square: degenerate table, not computed")
    else:
        flag = "  (degenerate: expected counts < 1)" if chi["degenerate"] else ""
        print(f"chi-square {chi['statistic']:.3f}  dof {chi['dof']}  p {chi['p_value']:.4g}{flag}")
    print(f"selection measurements saved: {res['selection_measurements_saved']}")
    print(f"wrote {out / 'compare.json'}")
    return 0


def cmd_validate_oracle(args) -> int:
    cfg = _apply_overrides(parse_config(args.config), args)
    rho0, u, vs = cfg.build_density(), cfg.build_velocity(), cfg.velocity_set_obj()
    exact = engine.enumerate_branches(rho0, u, vs, cfg.steps, max_leaves=args.max_leaves)
    digital = run_digital(rho0, u, vs, cfg.steps)
    diff = float(np.max(np.abs(exact - digital)))
    ok = diff < args.tol
    print(f"oracle vs digital: max |diff| = {diff:.3e} over {engine.count_leaves(vs, cfg.steps)} leaves "
          f"-> {'OK' if ok else 'MISMATCH'}")
    return 0 if ok else 4


def cmd_list_cases(args) -> int:
    for name, cfg in shipped_cases().items():
        grid = "x".join(str(n) for n in cfg.grid)
        print(f"{name:18s} {cfg.velocity_set} {grid:6s} T={cfg.steps:<4d} S={cfg.shots:<9d} "
              f"ic={cfg.initial_condition['type']} u={cfg.velocity_field['type']} mode={cfg.mode}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qlbm", description=__doc__.split(":")[0])
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", help="JSON config path or shipped case name (see list-cases)")
    common.add_argument("--seed", type=_nonneg)
    common.add_argument("--shots", type=_count)
    common.add_argument("--output-dir")
    common.add_argument("--threads", type=_count, help="engine worker cap (default: $QLBM_THREADS or all cores)")
    common.add_argument("--backend", choices=("numba", "numpy"))
    common.add_argument("-v", "--verbose", action="count", default=0)
    with_steps = argparse.ArgumentParser(add_help=False)
    with_steps.add_argument("--steps", type=_nonneg)
    with_mode = argparse.ArgumentParser(add_help=False)
    with_mode.add_argument("--mode", choices=MODES)

    s = sub.add_parser("run", parents=[common, with_steps, with_mode], help="run one case")
    s.set_defaults(func=cmd_run)
    s = sub.add_parser("sweep-shots", parents=[common, with_steps, with_mode], help="MAPE against shot count")
    s.add_argument("--shots-list", type=_int_list, required=True, help="comma separated, e.g. 1e3,1e4,1e5")
    s.set_defaults(func=cmd_sweep_shots)
    s = sub.add_parser("sweep-steps", parents=[common, with_mode], help="MAPE against number of steps")
    s.add_argument("--steps-list", type=_int_list, required=True)
    s.set_defaults(func=cmd_sweep_steps)
    s = sub.add_parser("compare-hybrid", parents=[common, with_steps], help="dynamic against hybrid mode")
    s.set_defaults(func=cmd_compare_hybrid)
    s = sub.add_parser("validate-oracle", parents=[common, with_steps], help="exact branch sum against digital LBM")
    s.add_argument("--max-leaves", type=_count, default=engine.DEFAULT_MAX_LEAVES)
    s.add_argument("--tol", type=float, default=1e-10)
    s.set_defaults(func=cmd_validate_oracle)
    s = sub.add_parser("list-cases", help="list shipped validation cases")
    s.set_defaults(func=cmd_list_cases)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(getattr(args, "verbose", 0), 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        return args.func(args)
    except QLBMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # noqa: BLE001 - the CLI maps everything to an exit code
        log.debug("unhandled", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
