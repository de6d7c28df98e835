"""Command-line surface.

Subcommands: simulate, phase-scan, diagnose, oracle-verify, report.
Precedence for settings: built-in defaults, then the --config file, then
--set section.key=value pairs, then dedicated flags. Exit codes: 0 success,
2 configuration error, 3 failed diagnostic or verification check, 4 I/O
error. STOCHGROWTH_WORKERS sets the default worker count only; an explicit
workers setting always wins.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .harness import (
    ConfigError,
    DiagnosticFailure,
    ExperimentConfig,
    ValidationError,
    default_workers,
    diagnose,
    phase_scan,
    read_jsonl,
    run_ensemble,
    write_summary_csv,
)
from .oracle import oracle_equivalence


def _add_config_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", help="INI config file")
    sub.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config entry (repeatable)",
    )
    sub.add_argument("--kind", help="model family")
    sub.add_argument("--dim", type=int, help="lattice dimension")
    for name in ("p", "q", "beta", "env-rate", "noise-sigma"):
        sub.add_argument(f"--{name}", type=float, help=f"model parameter {name}")
    sub.add_argument("--env", help="environment law for dpre")
    sub.add_argument("--t-max", type=int, help="time horizon")
    sub.add_argument("--replicas", type=int, help="ensemble size")
    sub.add_argument("--seed", type=int, help="base seed")
    sub.add_argument("--workers", type=int, help="process count")
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--label", help="output file stem")
    sub.add_argument("--trace", action="store_true", help="write per-step series")
    sub.add_argument(
        "--validate", action="store_true", help="run per-trajectory debug checks"
    )


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_file(args.config)
    else:
        cfg = ExperimentConfig(params={})
    cfg.apply_overrides(args.overrides)
    if args.kind:
        cfg.kind = args.kind.lower()
    if args.dim is not None:
        cfg.dim = args.dim
    for attr, key in (
        ("p", "p"),
        ("q", "q"),
        ("beta", "beta"),
        ("env_rate", "env_rate"),
        ("noise_sigma", "noise_sigma"),
    ):
        val = getattr(args, attr)
        if val is not None:
            cfg.params[key] = val
    if args.env:
        cfg.params["env"] = args.env.lower()
    if args.t_max is not None:
        cfg.t_max = args.t_max
    if args.replicas is not None:
        cfg.replicas = args.replicas
    if args.seed is not None:
        cfg.seed = args.seed
    if args.workers is not None:
        cfg.workers = args.workers
    elif cfg.workers == 1:
        cfg.workers = default_workers()
    if args.out:
        cfg.out_dir = args.out
    if args.label:
        cfg.label = args.label
    if args.trace:
        cfg.trace = True
    if args.validate:
        cfg.validate = True
    if not cfg.params and cfg.kind in ("osp", "gosp", "gobp", "bcpp"):
        cfg.params = {"p": 0.8}
    return cfg


def _cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    summary, _ = run_ensemble(cfg)
    doc = summary.to_dict()
    print(json.dumps(doc, sort_keys=True, indent=2))
    if cfg.out_dir:
        print(
            f"# wrote {cfg.run_label()}.jsonl and {cfg.run_label()}-summary.csv "
            f"under {cfg.out_dir}",
            file=sys.stderr,
        )
    return 0


def _cmd_phase_scan(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    values = [float(tok) for tok in args.values.replace(",", " ").split()]
    if not values:
        raise ConfigError("scan.values", "need at least one grid value")
    rows = phase_scan(cfg, args.param, values)
    cols = (
        "value",
        "verdict_growth_log_margin",
        "verdict_slow_growth_certified",
        "verdict_gamma",
        "verdict_threshold_product",
        "verdict_threshold_certified",
        "verdict_t0",
        "survival_fraction",
        "final_log_mass_median",
    )
    print("\t".join(cols))
    for row in rows:
        print("\t".join(_cell(row.get(c)) for c in cols))
    if args.figure:
        from .report import render_scan_figure

        out = Path(args.figure)
        render_scan_figure(rows, out, param=args.param)
        print(f"# wrote {out}", file=sys.stderr)
    return 0


def _cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _cmd_diagnose(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    try:
        doc = diagnose(cfg)
    except DiagnosticFailure as exc:
        print(json.dumps(exc.document, sort_keys=True, indent=2))
        print(f"# diagnostic failure: {exc}", file=sys.stderr)
        return 3
    print(json.dumps(doc, sort_keys=True, indent=2))
    return 0


def _cmd_oracle_verify(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    cfg.check()
    model = cfg.build()
    mismatches = 0
    for s in range(args.seeds):
        cmp_ = oracle_equivalence(model, cfg.seed + s, args.replica, args.t)
        status = "ok" if cmp_.ok else f"FAIL ({cmp_.detail})"
        print(
            f"seed={cfg.seed + s} t={args.t}: {status} "
            f"density_err={cmp_.max_density_error:.2e}"
        )
        mismatches += not cmp_.ok
    print(f"# matched {args.seeds - mismatches}/{args.seeds}")
    return 3 if mismatches else 0


def _cmd_report(args: argparse.Namespace) -> int:
    from .report import aggregate_rows, render_run_figures

    run = Path(args.run)
    header, rows = read_jsonl(run)
    agg = aggregate_rows(header, rows)
    out_dir = Path(args.out) if args.out else run.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    flat = {
        k: v
        for k, v in agg.items()
        if not isinstance(v, (dict, list))
    }
    for c, s, a in zip(
        agg["exceedance"]["thresholds"],
        agg["exceedance"]["survivors"],
        agg["exceedance"]["overall"],
    ):
        flat[f"exceedance_survivors_{c:g}"] = s
        flat[f"exceedance_overall_{c:g}"] = a
    for key, val in agg["decay"].items():
        flat[f"decay_{key}"] = val
    write_summary_csv(out_dir / f"{run.stem}-reaggregated.csv", [flat])
    figures = render_run_figures(run, out_dir)
    print(json.dumps(agg, sort_keys=True, indent=2))
    names = ", ".join(p.name for p in figures)
    print(f"# wrote {run.stem}-reaggregated.csv and figures: {names}",
          file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stochgrowth",
        description=(
            "simulation laboratory for linear stochastic growth on the "
            "integer lattice"
        ),
    )
    subs = parser.add_subparsers(dest="command", required=True)

    sim = subs.add_parser("simulate", help="run one ensemble and summarize")
    _add_config_flags(sim)
    sim.set_defaults(func=_cmd_simulate)

    scan = subs.add_parser("phase-scan", help="sweep one model parameter")
    _add_config_flags(scan)
    scan.add_argument("--param", required=True, choices=("p", "q", "beta"))
    scan.add_argument(
        "--values", required=True, help="comma or space separated grid"
    )
    scan.add_argument("--figure", help="write the phase portrait PNG here")
    scan.set_defaults(func=_cmd_phase_scan)

    diag = subs.add_parser("diagnose", help="pipeline health checks")
    _add_config_flags(diag)
    diag.set_defaults(func=_cmd_diagnose)

    orc = subs.add_parser(
        "oracle-verify", help="compare the step engine against path enumeration"
    )
    _add_config_flags(orc)
    orc.add_argument("--seeds", type=int, default=10)
    orc.add_argument("--t", type=int, default=5)
    orc.add_argument("--replica", type=int, default=0)
    orc.set_defaults(func=_cmd_oracle_verify)

    rep = subs.add_parser(
        "report", help="re-aggregate an existing run file and render figures"
    )
    rep.add_argument("--run", required=True, help="path to a run .jsonl")
    rep.add_argument("--out", help="directory for CSV and figures")
    rep.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DiagnosticFailure, ValidationError) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
