"""Figure rendering and JSONL re-aggregation.

Works from run files alone: every figure that needs only final records
(survival curve, exceedance bars, final-mass histogram) renders for any run,
while per-step panels (overlap spaghetti, mass decay) appear only when the
run was written with trace = true. Figures are PNG files placed next to the
delimited output, one chart per file.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .harness import read_jsonl, wilson_interval

_DPI = 130
_SPAGHETTI_CAP = 60  # raw trajectories drawn behind the median


def _new_axes(title: str, xlabel: str, ylabel: str):
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.25)
    return fig, ax


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def aggregate_rows(header: dict, rows: list[dict]) -> dict:
    """Ensemble summary recomputed from final records only."""
    cfg = header["config"]
    n = len(rows)
    survived = np.array([bool(r["survived"]) for r in rows], dtype=bool)
    ns = int(survived.sum())
    finals = np.array(
        [r["final_log_mass"] for r in rows if r["survived"]], dtype=np.float64
    )
    wmax = np.array([r["window_max_overlap"] for r in rows], dtype=np.float64)
    thresholds = [float(c) for c in cfg["thresholds"]]
    slopes = np.array(
        [r["slope"] for r in rows if r["survived"] and r.get("slope_ok")],
        dtype=np.float64,
    )
    ci = wilson_interval(ns, n) if n else (0.0, 1.0)
    return {
        "schema": header["schema"],
        "digest": header["digest"],
        "kind": cfg["kind"],
        "dim": cfg["dim"],
        "n": n,
        "t_max": cfg["t_max"],
        "survival_count": ns,
        "survival_fraction": ns / n if n else 0.0,
        "survival_ci": [float(ci[0]), float(ci[1])],
        "final_log_mass_mean": float(finals.mean()) if ns else math.nan,
        "final_log_mass_median": float(np.median(finals)) if ns else math.nan,
        "exceedance": {
            "thresholds": thresholds,
            "survivors": [
                float(np.mean(wmax[survived] >= c)) if ns else 0.0
                for c in thresholds
            ],
            "overall": [
                float(np.mean(wmax >= c)) if n else 0.0 for c in thresholds
            ],
        },
        "decay": {
            "applicable": bool(slopes.size),
            "n_used": int(slopes.size),
            "median_slope": float(np.median(slopes)) if slopes.size else math.nan,
            "fraction_positive": float(np.mean(slopes > 0.0))
            if slopes.size
            else math.nan,
        },
    }


def _survival_curve(rows: list[dict], t_max: int) -> np.ndarray:
    alive = np.full(t_max + 1, len(rows), dtype=np.float64)
    for r in rows:
        et = r["extinction_time"]
        if et is not None:
            alive[int(et):] -= 1.0
    return alive / max(len(rows), 1)


def render_run_figures(
    run_path: str | Path, out_dir: str | Path | None = None
) -> list[Path]:
    """All applicable figures for one run file; returns the written paths."""
    run_path = Path(run_path)
    header, rows = read_jsonl(run_path)
    out = Path(out_dir) if out_dir is not None else run_path.parent
    out.mkdir(parents=True, exist_ok=True)
    stem = run_path.stem
    cfg = header["config"]
    t_max = int(cfg["t_max"])
    label = f"{cfg['kind']} d={cfg['dim']}"
    written: list[Path] = []

    # survival curve (always available)
    fig, ax = _new_axes(f"survival fraction, {label}", "time", "fraction alive")
    curve = _survival_curve(rows, t_max)
    ax.plot(np.arange(t_max + 1), curve, lw=1.8)
    ax.set_ylim(-0.02, 1.02)
    written.append(_save(fig, out / f"{stem}-survival.png"))

    # exceedance bars (always available)
    agg = aggregate_rows(header, rows)
    exc = agg["exceedance"]
    x = np.arange(len(exc["thresholds"]))
    fig, ax = _new_axes(
        f"late-window overlap exceedance, {label}",
        "overlap threshold",
        "fraction of trajectories",
    )
    ax.bar(x - 0.18, exc["survivors"], width=0.36, label="survivors")
    ax.bar(x + 0.18, exc["overall"], width=0.36, label="all")
    ax.set_xticks(x, [f"{c:g}" for c in exc["thresholds"]])
    ax.set_ylim(0, 1.05)
    ax.legend()
    written.append(_save(fig, out / f"{stem}-exceedance.png"))

    # final log-mass histogram among survivors
    finals = [r["final_log_mass"] for r in rows if r["survived"]]
    if finals:
        fig, ax = _new_axes(
            f"final log mass among survivors, {label}",
            "ln of normalized mass at t_max",
            "count",
        )
        ax.hist(finals, bins=min(30, max(5, len(finals) // 4)))
        written.append(_save(fig, out / f"{stem}-final-mass.png"))

    # per-step panels when traces were recorded
    traced = [r for r in rows if "series" in r]
    if traced:
        written.append(
            _overlap_spaghetti(traced, t_max, label, out / f"{stem}-overlap.png")
        )
        written.append(
            _mass_decay(traced, t_max, label, out / f"{stem}-mass.png")
        )
    return written


def _overlap_spaghetti(
    traced: list[dict], t_max: int, label: str, path: Path
) -> Path:
    fig, ax = _new_axes(f"replica overlap, {label}", "time", "overlap")
    times = np.arange(t_max + 1)
    stack = []
    for r in traced[:_SPAGHETTI_CAP]:
        y = np.array(
            [v if v is not None else 0.0 for v in r["series"]["overlap"]]
        )
        ax.plot(times, y, color="steelblue", alpha=0.18, lw=0.7)
        stack.append(y)
    for r in traced[_SPAGHETTI_CAP:]:
        stack.append(
            np.array([v if v is not None else 0.0 for v in r["series"]["overlap"]])
        )
    survivors = [
        y for r, y in zip(traced, stack) if r["survived"]
    ]
    if survivors:
        ax.plot(
            times,
            np.median(np.vstack(survivors), axis=0),
            color="crimson",
            lw=2.0,
            label="survivor median",
        )
        ax.legend()
    ax.set_ylim(-0.02, 1.02)
    return _save(fig, path)


def _mass_decay(traced: list[dict], t_max: int, label: str, path: Path) -> Path:
    fig, ax = _new_axes(
        f"normalized log mass, {label}", "time", "ln of normalized mass"
    )
    times = np.arange(t_max + 1)
    survivor_rows = []
    for r in traced[:_SPAGHETTI_CAP]:
        y = np.array(
            [v if v is not None else np.nan for v in r["series"]["log_mass"]]
        )
        ax.plot(times, y, color="gray", alpha=0.2, lw=0.7)
    for r in traced:
        if r["survived"]:
            survivor_rows.append(
                np.array(
                    [v if v is not None else np.nan for v in r["series"]["log_mass"]]
                )
            )
    if survivor_rows:
        ax.plot(
            times,
            np.nanmedian(np.vstack(survivor_rows), axis=0),
            color="crimson",
            lw=2.0,
            label="survivor median",
        )
        ax.legend()
    return _save(fig, path)


def render_scan_figure(
    rows: list[dict], out_path: str | Path, param: str | None = None
) -> Path:
    """Phase portrait of one parameter sweep: criterion margins on the left
    axis, survival fraction on the right."""
    if not rows:
        raise ValueError("empty scan")
    param = param or rows[0].get("param", "value")
    xs = np.array([float(r["value"]) for r in rows])
    margin = np.array([float(r["verdict_growth_log_margin"]) for r in rows])
    product = np.array([float(r["verdict_threshold_product"]) for r in rows])
    survival = np.array([float(r["survival_fraction"]) for r in rows])

    fig, ax = plt.subplots(figsize=(6.8, 4.4))
    ax.axhline(0.0, color="black", lw=0.8, alpha=0.5)
    ax.plot(xs, margin, "o-", label="growth log margin", color="tab:blue")
    ax.plot(
        xs, product, "s-", label="threshold product - 1", color="tab:green"
    )
    ax.set_xlabel(param)
    ax.set_ylabel("criterion value")
    ax.grid(True, alpha=0.25)
    twin = ax.twinx()
    twin.plot(xs, survival, "^--", color="tab:red", label="survival fraction")
    twin.set_ylabel("survival fraction")
    twin.set_ylim(-0.02, 1.02)
    h1, l1 = ax.get_legend_handles_labels()
    h2, l2 = twin.get_legend_handles_labels()
    ax.legend(h1 + h2, l1 + l2, loc="best", fontsize=8)
    ax.set_title(f"phase portrait over {param}")
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    return _save(fig, out_path)
