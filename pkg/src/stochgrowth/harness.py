"""Experiment configuration, ensemble orchestration, and output emission.

One config object determines every output byte except timestamps: replicas
draw disorder from a keyed counter stream indexed by (seed, replica, time),
so the records are identical whatever the worker count or chunking. Outputs
are one JSONL line per trajectory (plus a header carrying the config and its
digest) and a single-row CSV for the ensemble summary.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import collision, martingale, observables
from .disorder import DisorderStream
from .lattice import initial_state
from .models import BUILTIN_KINDS, LatticeModel, build_model
from .observables import (
    DEFAULT_THRESHOLDS,
    InsufficientDataError,
    TrajectoryRecord,
    decay_regression,
    localization_summary,
    max_density,
    replica_overlap,
    smoothed_overlap,
    trajectory_decay_slope,
    wilson_interval,
)
from .oracle import oracle_equivalence

SCHEMA_VERSION = 1

# model parameters accepted in the [model] config section, besides kind/dim
_FLOAT_PARAMS = ("p", "q", "beta", "env_rate", "noise_sigma")
_STR_PARAMS = ("env",)


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending field."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"config field {field_name}: {message}")


@dataclass
class ExperimentConfig:
    """Complete description of one ensemble experiment."""

    kind: str = "osp"
    dim: int = 1
    params: dict = field(default_factory=lambda: {"p": 0.8})
    t_max: int = 200
    replicas: int = 100
    seed: int = 0
    workers: int = 1
    window_fraction: float = 0.5
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    trace: bool = False
    validate: bool = False
    out_dir: str | None = None
    label: str | None = None

    # -- construction ------------------------------------------------------

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        parser = configparser.ConfigParser()
        read = parser.read(path)
        if not read:
            raise ConfigError("file", f"cannot read config file {path}")
        return cls.from_parser(parser)

    @classmethod
    def from_parser(cls, parser: configparser.ConfigParser) -> "ExperimentConfig":
        cfg = cls(params={})
        known = {"model", "run", "observables", "output"}
        for section in parser.sections():
            if section not in known:
                raise ConfigError(section, "unknown config section")
        if parser.has_section("model"):
            for key, raw in parser.items("model"):
                cfg._set("model", key, raw)
        if parser.has_section("run"):
            for key, raw in parser.items("run"):
                cfg._set("run", key, raw)
        if parser.has_section("observables"):
            for key, raw in parser.items("observables"):
                cfg._set("observables", key, raw)
        if parser.has_section("output"):
            for key, raw in parser.items("output"):
                cfg._set("output", key, raw)
        if not cfg.params and cfg.kind in ("osp", "gosp", "gobp", "bcpp"):
            cfg.params = {"p": 0.8}
        return cfg

    def _set(self, section: str, key: str, raw: str) -> None:
        """Apply one section.key = raw assignment with type checking."""
        where = f"{section}.{key}"

        def as_int() -> int:
            try:
                return int(raw)
            except ValueError:
                raise ConfigError(where, f"expected an integer, got {raw!r}")

        def as_float() -> float:
            try:
                return float(raw)
            except ValueError:
                raise ConfigError(where, f"expected a number, got {raw!r}")

        def as_bool() -> bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ConfigError(where, f"expected a boolean, got {raw!r}")

        if section == "model":
            if key == "kind":
                self.kind = raw.strip().lower()
            elif key == "dim":
                self.dim = as_int()
            elif key in _FLOAT_PARAMS:
                self.params[key] = as_float()
            elif key in _STR_PARAMS:
                self.params[key] = raw.strip().lower()
            else:
                raise ConfigError(where, "unknown model parameter")
        elif section == "run":
            if key == "t_max":
                self.t_max = as_int()
            elif key == "replicas":
                self.replicas = as_int()
            elif key == "seed":
                self.seed = as_int()
            elif key == "workers":
                self.workers = as_int()
            else:
                raise ConfigError(where, "unknown run setting")
        elif section == "observables":
            if key == "window_fraction":
                self.window_fraction = as_float()
            elif key == "thresholds":
                try:
                    self.thresholds = tuple(
                        float(tok) for tok in raw.replace(",", " ").split()
                    )
                except ValueError:
                    raise ConfigError(where, f"expected numbers, got {raw!r}")
            elif key == "trace":
                self.trace = as_bool()
            elif key == "validate":
                self.validate = as_bool()
            else:
                raise ConfigError(where, "unknown observables setting")
        elif section == "output":
            if key == "directory":
                self.out_dir = raw.strip() or None
            elif key == "label":
                self.label = raw.strip() or None
            else:
                raise ConfigError(where, "unknown output setting")

    def apply_overrides(self, pairs: list[str]) -> None:
        """Apply section.key=value strings (CLI --set) over current values."""
        for pair in pairs:
            if "=" not in pair or "." not in pair.split("=", 1)[0]:
                raise ConfigError(pair, "expected section.key=value")
            dotted, value = pair.split("=", 1)
            section, key = dotted.split(".", 1)
            self._set(section.strip(), key.strip(), value.strip())

    # -- validation and identity --------------------------------------------

    def check(self) -> None:
        if self.kind not in BUILTIN_KINDS:
            raise ConfigError("model.kind", f"unknown kind {self.kind!r}")
        if self.dim < 1:
            raise ConfigError("model.dim", "dimension must be >= 1")
        if self.t_max < 0:
            raise ConfigError("run.t_max", "horizon must be >= 0")
        if self.replicas < 0:
            raise ConfigError("run.replicas", "replica count must be >= 0")
        if self.workers < 1:
            raise ConfigError("run.workers", "worker count must be >= 1")
        if not 0.0 < self.window_fraction <= 1.0:
            raise ConfigError(
                "observables.window_fraction", "must lie in (0, 1]"
            )
        if not self.thresholds or any(
            not 0.0 < c <= 1.0 for c in self.thresholds
        ):
            raise ConfigError(
                "observables.thresholds", "thresholds must lie in (0, 1]"
            )
        try:
            self.build()
        except (ValueError, TypeError) as exc:
            raise ConfigError("model", str(exc))

    def build(self) -> LatticeModel:
        return build_model(self.kind, self.dim, **self.params)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "kind": self.kind,
            "dim": self.dim,
            "params": dict(sorted(self.params.items())),
            "t_max": self.t_max,
            "replicas": self.replicas,
            "seed": self.seed,
            "window_fraction": self.window_fraction,
            "thresholds": list(self.thresholds),
            "trace": self.trace,
            "validate": self.validate,
        }

    def digest(self) -> str:
        """Hash of everything that determines the output records.

        Worker count and output paths are excluded: they affect scheduling
        and placement, never record contents.
        """
        canon = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canon.encode()).hexdigest()[:12]

    def run_label(self) -> str:
        return self.label or f"{self.kind}-d{self.dim}-{self.digest()}"


class ValidationError(RuntimeError):
    """A debug-mode trajectory check failed."""


# ---------------------------------------------------------------------------
# single-trajectory simulation


def simulate_trajectory(
    model: LatticeModel, config: ExperimentConfig, replica: int
) -> TrajectoryRecord:
    """Evolve one replica from a point mass at the origin to t_max.

    Extinction is absorbing: after the hitting step the overlap, peak and
    support are pinned at 0, the log mass at -inf, and the one-step factors
    at NaN (the extinction step itself records factor 0).
    """
    t_max = config.t_max
    kern = model.mean_kernel()
    state = initial_state(config.dim)
    stream = DisorderStream(config.seed, replica)

    overlap = np.zeros(t_max + 1)
    peak = np.zeros(t_max + 1)
    smoothed = np.zeros(t_max + 1)
    log_mass = np.full(t_max + 1, -math.inf)
    support = np.zeros(t_max + 1, dtype=np.int64)
    factors = np.full(t_max, math.nan)

    overlap[0] = replica_overlap(state.rho)
    peak[0] = max_density(state.rho)
    smoothed[0] = smoothed_overlap(state.rho, kern)
    log_mass[0] = state.log_mass
    support[0] = len(state.rho)

    extinction_time = None
    for t in range(1, t_max + 1):
        if state.extinct:
            break
        prev_log = state.log_mass
        state = model.step(state, stream)
        if state.extinct:
            extinction_time = t
            factors[t - 1] = 0.0
            break
        factors[t - 1] = math.exp(state.log_mass - prev_log)
        overlap[t] = replica_overlap(state.rho)
        peak[t] = max_density(state.rho)
        smoothed[t] = smoothed_overlap(state.rho, kern)
        log_mass[t] = state.log_mass
        support[t] = len(state.rho)

    rec = TrajectoryRecord(
        replica=replica,
        t_max=t_max,
        survived=not state.extinct,
        extinction_time=extinction_time,
        overlap=overlap,
        peak=peak,
        smoothed=smoothed,
        log_mass=log_mass,
        support=support,
        overlap_sum=np.cumsum(overlap),
        overlap_32_sum=np.cumsum(overlap ** 1.5),
        step_factors=factors,
    )
    slope, ok = trajectory_decay_slope(rec)
    rec.slope, rec.slope_ok = slope, ok
    if config.validate:
        _validate_trajectory(rec)
    return rec


def _validate_trajectory(rec: TrajectoryRecord) -> None:
    """Debug assertions: pathwise product bound and elementary inequalities
    on the recorded one-step factors. Cheap relative to the simulation."""
    if rec.t_max == 0:
        return
    path = martingale.MartingalePath.from_step_factors(rec.step_factors)
    if len(path.increments) == 0:
        return
    report = martingale.pathwise_product_bound(path)
    if not report.all_ok:
        raise ValidationError(
            f"replica {rec.replica}: product bound violated at "
            f"t={report.argmin_time} (margin {report.min_margin:.3e})"
        )
    bounds = martingale.elementary_factor_bounds(path.increments)
    if not bounds.all_ok:
        raise ValidationError(
            f"replica {rec.replica}: elementary factor bounds violated"
        )
    live = rec.overlap[rec.support > 0]
    if live.size and (live < 0).any() or (rec.overlap > 1.0 + 1e-12).any():
        raise ValidationError(f"replica {rec.replica}: overlap outside [0, 1]")


def _simulate_batch(config_dict: dict, replicas: list[int]) -> list[TrajectoryRecord]:
    """Worker entry point: rebuild the model and run a replica slice."""
    cfg = _config_from_dict(config_dict)
    model = cfg.build()
    return [simulate_trajectory(model, cfg, r) for r in replicas]


def _config_from_dict(d: dict) -> ExperimentConfig:
    return ExperimentConfig(
        kind=d["kind"],
        dim=d["dim"],
        params=dict(d["params"]),
        t_max=d["t_max"],
        replicas=d["replicas"],
        seed=d["seed"],
        window_fraction=d["window_fraction"],
        thresholds=tuple(d["thresholds"]),
        trace=d["trace"],
        validate=d["validate"],
    )


# ---------------------------------------------------------------------------
# ensemble summary


@dataclass
class EnsembleSummary:
    """Aggregate verdicts of one ensemble run."""

    digest: str
    kind: str
    dim: int
    params: dict
    n: int
    t_max: int
    seed: int
    survival_count: int
    survival_fraction: float
    survival_ci: tuple[float, float]
    final_log_mass_mean: float
    final_log_mass_median: float
    exceedance_thresholds: tuple[float, ...]
    exceedance_survivors: tuple[float, ...]
    exceedance_overall: tuple[float, ...]
    decay: dict
    verdicts: dict

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "digest": self.digest,
            "kind": self.kind,
            "dim": self.dim,
            "params": self.params,
            "n": self.n,
            "t_max": self.t_max,
            "seed": self.seed,
            "survival_count": self.survival_count,
            "survival_fraction": self.survival_fraction,
            "survival_ci": list(self.survival_ci),
            "final_log_mass_mean": self.final_log_mass_mean,
            "final_log_mass_median": self.final_log_mass_median,
            "exceedance": {
                "thresholds": list(self.exceedance_thresholds),
                "survivors": list(self.exceedance_survivors),
                "overall": list(self.exceedance_overall),
            },
            "decay": self.decay,
            "verdicts": self.verdicts,
        }

    def flatten(self) -> dict:
        """One flat key -> scalar mapping for the CSV row."""
        row: dict = {
            "digest": self.digest,
            "kind": self.kind,
            "dim": self.dim,
            "n": self.n,
            "t_max": self.t_max,
            "seed": self.seed,
            "survival_count": self.survival_count,
            "survival_fraction": self.survival_fraction,
            "survival_ci_low": self.survival_ci[0],
            "survival_ci_high": self.survival_ci[1],
            "final_log_mass_mean": self.final_log_mass_mean,
            "final_log_mass_median": self.final_log_mass_median,
        }
        for key, val in sorted(self.params.items()):
            row[f"param_{key}"] = val
        for c, s, a in zip(
            self.exceedance_thresholds,
            self.exceedance_survivors,
            self.exceedance_overall,
        ):
            row[f"exceedance_survivors_{c:g}"] = s
            row[f"exceedance_overall_{c:g}"] = a
        for key in ("median_slope", "fraction_positive", "n_used", "applicable"):
            row[f"decay_{key}"] = self.decay.get(key)
        for key, val in self.verdicts.items():
            row[f"verdict_{key}"] = val
        return row


def _phase_verdicts(
    model: LatticeModel,
    *,
    horizon: int | None = None,
    _cache: dict = {},
) -> dict:
    """Criterion panel: growth-log margin, gamma, collision lower bound,
    threshold product, and the localization horizon when certified.

    The collision series depends only on the normalized mean kernel, which
    for several families is the simple walk whatever the parameters, so the
    evaluator is cached on the kernel signature.
    """
    kern = model.mean_kernel()
    hor = horizon if horizon is not None else collision.default_horizon(model.dim)
    sig = (
        model.dim,
        hor,
        tuple(
            (tuple(int(v) for v in c), round(w / kern.total, 15))
            for c, w in zip(kern.field.coords, kern.field.weights)
        ),
    )
    if sig not in _cache:
        ev = collision.series_evaluator(kern, hor)
        _cache[sig] = (ev, ev.partial_sum(hor))
    evaluator, s_hor = _cache[sig]
    pi_hat = s_hor / (1.0 + s_hor)
    margin = model.growth_log_margin()
    gamma = model.gamma()
    product = gamma * pi_hat - 1.0
    verdicts = {
        "growth_log_margin": margin,
        "slow_growth_certified": bool(margin > 0.0),
        "gamma": gamma,
        "pi_hat": pi_hat,
        "pi_horizon": hor,
        "pi_method": evaluator.method,
        "threshold_product": product,
        "threshold_certified": bool(product > 0.0),
        "t0": None,
        "t0_status": "not_attempted",
        "epsilon": None,
    }
    if product > 0.0:
        sel = collision.select_t0(kern, gamma, horizon=hor, evaluator=evaluator)
        verdicts["t0"] = sel.t0
        verdicts["t0_status"] = sel.status
        verdicts["epsilon"] = sel.epsilon
    else:
        verdicts["t0_status"] = "threshold_not_certified"
    return verdicts


def summarize(
    records: list[TrajectoryRecord],
    config: ExperimentConfig,
    *,
    verdicts: dict | None = None,
) -> EnsembleSummary:
    n = len(records)
    survivors = [r for r in records if r.survived]
    ns = len(survivors)
    ci = wilson_interval(ns, n) if n else (0.0, 1.0)
    finals = np.array([r.final_log_mass() for r in survivors])
    loc = localization_summary(
        records,
        window_fraction=config.window_fraction,
        thresholds=config.thresholds,
    ) if n else None
    try:
        decay = decay_regression(records).to_dict() if n else None
        if decay is None:
            raise InsufficientDataError("empty ensemble")
    except InsufficientDataError as exc:
        decay = {"applicable": False, "reason": str(exc)}
    if verdicts is None:
        verdicts = _phase_verdicts(config.build())
    return EnsembleSummary(
        digest=config.digest(),
        kind=config.kind,
        dim=config.dim,
        params=dict(sorted(config.params.items())),
        n=n,
        t_max=config.t_max,
        seed=config.seed,
        survival_count=ns,
        survival_fraction=ns / n if n else 0.0,
        survival_ci=(float(ci[0]), float(ci[1])),
        final_log_mass_mean=float(finals.mean()) if ns else math.nan,
        final_log_mass_median=float(np.median(finals)) if ns else math.nan,
        exceedance_thresholds=tuple(config.thresholds),
        exceedance_survivors=tuple(float(v) for v in loc.survivor_exceedance)
        if loc
        else tuple(0.0 for _ in config.thresholds),
        exceedance_overall=tuple(float(v) for v in loc.overall_exceedance)
        if loc
        else tuple(0.0 for _ in config.thresholds),
        decay=decay,
        verdicts=verdicts,
    )


# ---------------------------------------------------------------------------
# JSON emission


def _json_safe(value):
    """Replace non-finite floats by None so json round-trips losslessly."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, (np.floating,)):
        v = float(value)
        return v if math.isfinite(v) else None
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_json_safe(v) for v in value.tolist()]
    return value


def record_to_json(rec: TrajectoryRecord, *, trace: bool = False) -> dict:
    doc = {
        "schema": SCHEMA_VERSION,
        "type": "trajectory",
        "replica": rec.replica,
        "survived": rec.survived,
        "extinction_time": rec.extinction_time,
        "final_log_mass": rec.final_log_mass(),
        "final_overlap": float(rec.overlap[-1]),
        "final_support": int(rec.support[-1]),
        "window_max_overlap": rec.window_max_overlap(),
        "heavy_tail_ratio": rec.heavy_tail_ratio(),
        "slope": rec.slope,
        "slope_ok": rec.slope_ok,
    }
    if trace:
        doc["series"] = {
            "overlap": rec.overlap,
            "peak": rec.peak,
            "smoothed": rec.smoothed,
            "log_mass": rec.log_mass,
            "support": rec.support,
            "step_factors": rec.step_factors,
        }
    return _json_safe(doc)


def write_jsonl(
    path: Path,
    records: list[TrajectoryRecord],
    config: ExperimentConfig,
    *,
    timestamp: str | None = None,
) -> None:
    header = {
        "schema": SCHEMA_VERSION,
        "type": "header",
        "config": config.to_dict(),
        "digest": config.digest(),
        "timestamp": timestamp
        or datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(_json_safe(header), sort_keys=True) + "\n")
        for rec in records:
            fh.write(
                json.dumps(record_to_json(rec, trace=config.trace), sort_keys=True)
                + "\n"
            )


def read_jsonl(path: Path) -> tuple[dict, list[dict]]:
    """Header dict and trajectory dicts from one run file."""
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    if not lines or lines[0].get("type") != "header":
        raise ValueError(f"{path}: missing header line")
    return lines[0], [d for d in lines[1:] if d.get("type") == "trajectory"]


def write_summary_csv(path: Path, rows: list[dict]) -> None:
    fieldnames: list[str] = []
    for row in rows:
        for key in row:
            if key not in fieldnames:
                fieldnames.append(key)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# orchestration


def run_ensemble(
    config: ExperimentConfig,
    *,
    emit: bool = True,
) -> tuple[EnsembleSummary, list[TrajectoryRecord]]:
    """Simulate the full ensemble, summarize, and optionally write files.

    Replica r always draws from stream (seed, r) regardless of scheduling,
    so the records do not depend on the worker count. Workers receive
    contiguous replica slices and results are reassembled in index order.
    """
    config.check()
    replicas = list(range(config.replicas))
    if config.workers <= 1 or config.replicas <= 1:
        model = config.build()
        records = [simulate_trajectory(model, config, r) for r in replicas]
    else:
        nchunks = min(config.workers * 4, max(1, config.replicas))
        chunks = [replicas[i::nchunks] for i in range(nchunks)]
        chunks = [c for c in chunks if c]
        cfg_dict = {**config.to_dict(), "params": config.params}
        by_index: dict[int, TrajectoryRecord] = {}
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for batch in pool.map(_simulate_batch, [cfg_dict] * len(chunks), chunks):
                for rec in batch:
                    by_index[rec.replica] = rec
        records = [by_index[r] for r in replicas]
    summary = summarize(records, config)
    if emit and config.out_dir is not None:
        out = Path(config.out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            label = config.run_label()
            write_jsonl(out / f"{label}.jsonl", records, config)
            write_summary_csv(out / f"{label}-summary.csv", [summary.flatten()])
        except OSError as exc:
            raise RuntimeError(f"cannot write outputs under {config.out_dir}: {exc}")
    return summary, records


def phase_scan(
    config: ExperimentConfig,
    param: str,
    values: list[float],
    *,
    emit: bool = True,
) -> list[dict]:
    """Ensemble sweep over one scalar model parameter (p, q, or beta).

    Each grid point reruns the full ensemble with the same seed; the
    collision series is shared between points whose normalized mean kernel
    coincides (for most families it is the simple walk for every value).
    """
    if param not in _FLOAT_PARAMS:
        raise ConfigError(f"scan.{param}", "scan parameter must be a model number")
    rows = []
    for v in values:
        point = replace(
            config,
            params={**config.params, param: float(v)},
            out_dir=None,
            label=None,
        )
        point.check()
        summary, _ = run_ensemble(point, emit=False)
        row = {"param": param, "value": float(v)}
        row.update(summary.flatten())
        rows.append(row)
    if emit and config.out_dir is not None:
        out = Path(config.out_dir)
        try:
            out.mkdir(parents=True, exist_ok=True)
            write_summary_csv(
                out / f"{config.run_label()}-scan-{param}.csv", rows
            )
        except OSError as exc:
            raise RuntimeError(f"cannot write outputs under {config.out_dir}: {exc}")
    return rows


# ---------------------------------------------------------------------------
# diagnostics


class DiagnosticFailure(RuntimeError):
    """At least one hard diagnostic check failed."""

    def __init__(self, failures: list[str], document: dict):
        self.failures = failures
        self.document = document
        super().__init__("; ".join(failures))


def diagnose(
    config: ExperimentConfig,
    *,
    kernel=None,
    oracle_seeds: int = 5,
    oracle_t: int = 4,
    martingale_replicas: int = 32,
    strict: bool = True,
) -> dict:
    """One-document health check of the analysis pipeline for a config.

    Sections: model constants, collision-series profile with the localization
    horizon selection, peak return ratio, oracle equivalence over a few seeds,
    pathwise product bounds on short simulated paths, and the exact
    square-split inequality on a two-source law. Oracle, pathwise, and
    inequality sections are hard checks; with strict=True any hard failure
    raises DiagnosticFailure (CLI exit 3). kernel overrides the model's mean
    kernel in the collision sections (synthetic-kernel escape hatch for
    diagnostics; the model itself is untouched).
    """
    config.check()
    model = config.build()
    failures: list[str] = []
    kern = kernel if kernel is not None else model.mean_kernel()

    profile = collision.collision_series(kern)
    gamma = model.gamma()
    verdict_panel = {
        "gamma": gamma,
        "growth_log_margin": model.growth_log_margin(),
        "degeneracies": model.degeneracies(),
    }
    selection = collision.select_t0(kern, gamma, horizon=profile.horizon)
    ratio_horizon = min(100, profile.horizon)
    ratio = collision.peak_return_ratio(kern, ratio_horizon)

    matched = 0
    first_bad = None
    for s in range(oracle_seeds):
        cmp_ = oracle_equivalence(model, config.seed + s, 0, oracle_t)
        if cmp_.ok:
            matched += 1
        elif first_bad is None:
            first_bad = {"seed": config.seed + s, "detail": cmp_.detail}
    if matched != oracle_seeds:
        failures.append(
            f"oracle equivalence: {oracle_seeds - matched}/{oracle_seeds} "
            f"seeds diverged"
        )

    mart_cfg = replace(
        config,
        replicas=martingale_replicas,
        t_max=min(config.t_max, 64),
        validate=False,
        out_dir=None,
    )
    mart_model = mart_cfg.build()
    paths_ok = 0
    min_margin = math.inf
    pooled: list[np.ndarray] = []
    for r in range(martingale_replicas):
        rec = simulate_trajectory(mart_model, mart_cfg, r)
        path = martingale.MartingalePath.from_step_factors(rec.step_factors)
        if len(path.increments) == 0:
            paths_ok += 1
            continue
        rep = martingale.pathwise_product_bound(path)
        if rep.all_ok:
            paths_ok += 1
        min_margin = min(min_margin, rep.min_margin)
        pooled.append(path.increments)
    if paths_ok != martingale_replicas:
        failures.append(
            f"pathwise product bound: {martingale_replicas - paths_ok} paths violated"
        )
    bounds_ok = True
    if pooled:
        bounds_ok = martingale.elementary_factor_bounds(np.concatenate(pooled)).all_ok
        if not bounds_ok:
            failures.append("elementary factor bounds violated on pooled increments")

    half = Fraction(1, 2)
    ch = martingale.ch_inequality_check(
        [[(Fraction(0), half), (Fraction(1), half)]] * 2
    )
    if not ch.all_ok:
        failures.append("square-split inequality check failed on the two-source law")

    document = {
        "schema": SCHEMA_VERSION,
        "digest": config.digest(),
        "kind": config.kind,
        "dim": config.dim,
        "params": dict(sorted(config.params.items())),
        "model": verdict_panel,
        "collision": profile.to_dict(),
        "t0_selection": selection.to_dict(),
        "peak_return": {
            "horizon": ratio_horizon,
            "max_ratio": ratio.max_ratio,
            "argmax_time": ratio.argmax_time,
        },
        "oracle": {
            "seeds": oracle_seeds,
            "t": oracle_t,
            "matched": matched,
            "first_failure": first_bad,
        },
        "martingale": {
            "replicas": martingale_replicas,
            "paths_ok": paths_ok,
            "min_margin": None if math.isinf(min_margin) else min_margin,
            "elementary_bounds_ok": bounds_ok,
        },
        "square_split": {
            "ok": ch.all_ok,
            "cross_lhs": float(ch.lhs_cross),
            "cross_rhs": float(ch.rhs_cross),
            "self_lhs": float(ch.lhs_self),
            "self_rhs": float(ch.rhs_self),
        },
        "hard_failures": failures,
        "ok": not failures,
    }
    if failures and strict:
        raise DiagnosticFailure(failures, document)
    return _json_safe(document)


def default_workers() -> int:
    """Worker count from the environment, else 1."""
    raw = os.environ.get("STOCHGROWTH_WORKERS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1
