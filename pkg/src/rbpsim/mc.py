"""Replicated experiments and their reduction to limit-law comparisons."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed

from . import statistics as st
from .engine import DEFAULT_MEMORY_CAP, SnapshotPlan, StopRule, derive_seed, run
from .malthus import ModelParams, limit_measure, solve_lambda_star

DEFAULT_BOX = ((-1.0, 1.0), (0.0, 2.0), (0.5, math.inf))
REPLICA_COLUMNS = ("replica", "t", "N", "M", "mean_fitness", "max_fraction", "scaled_max",
                   "t_times_gap", "rel_birth")
CALIBRATION_NOTE = (
    "KS tolerances are calibration choices: no convergence rates are known for the "
    "limit laws of the largest family."
)


@dataclass
class ExperimentConfig:
    params: ModelParams
    analysis_times: list[float]
    replicas: int = 1
    base_seed: int = 0
    outputs: dict = field(default_factory=lambda: {
        "fitness_hist": True, "gamma_points": True, "largest": True, "wave": False})
    memory_cap: int = DEFAULT_MEMORY_CAP
    threads: int = 1
    box: tuple = DEFAULT_BOX
    n_bins: int = 200
    wave_grid: Sequence[float] = tuple(np.linspace(0.0, 12.0, 49))

    def __post_init__(self):
        self.analysis_times = [float(t) for t in self.analysis_times]
        if self.replicas < 1:
            raise ValueError("need at least one replica")
        if not self.analysis_times:
            raise ValueError("need at least one analysis time")
        if any(b <= a for a, b in zip(self.analysis_times, self.analysis_times[1:])):
            raise ValueError("analysis times must be strictly increasing")

    @property
    def windows(self) -> bool:
        """Window statistics need a regularly varying tail (a tail index)."""
        return self.params.dist.alpha is not None


@dataclass
class ReplicaResult:
    replica: int
    seed: int
    status: str
    rows: list[dict]
    hist: dict          # t -> fitness masses
    box_counts: dict    # t -> count of window points in the box
    wave: dict          # t -> empirical wave on the grid

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def run_replica(config: ExperimentConfig, replica: int) -> ReplicaResult:
    """Simulate replica ``replica`` and reduce each snapshot to its observables."""
    p = config.params
    seed = derive_seed(config.base_seed, replica)
    plan = SnapshotPlan.from_times(p, config.analysis_times, windows=config.windows)
    res = run(p, seed, StopRule(max_time=config.analysis_times[-1]), plan,
              memory_cap=config.memory_cap)
    if res.partial:
        return ReplicaResult(replica, seed, res.status, [], {}, {}, {})
    edges = st.default_bin_edges(config.n_bins)
    rows, hist, boxes, waves = [], {}, {}, {}
    for snap in res.snapshots:
        t = snap.time
        lf = st.largest_family(snap)
        T = snap.T_of_t
        row = {
            "replica": replica, "t": t, "N": snap.N, "M": snap.M,
            "mean_fitness": st.empirical_fitness(snap, edges).mean_fitness,
            "max_fraction": lf.fraction,
            "scaled_max": st.window_scale(p.gamma, t, T) * lf.size if T is not None else math.nan,
            "t_times_gap": t * (1.0 - lf.fitness),
            "rel_birth": lf.rel_birth if lf.rel_birth is not None else math.nan,
        }
        rows.append(row)
        if config.outputs.get("fitness_hist", True):
            hist[t] = st.empirical_fitness(snap, edges).masses
        if config.outputs.get("gamma_points", True) and T is not None:
            boxes[t] = st.box_count(st.gamma_points(snap, T, p.gamma), config.box)
        if config.outputs.get("wave", False):
            waves[t] = st.upper_tail_masses(snap, t, config.wave_grid)
    return ReplicaResult(replica, seed, "ok", rows, hist, boxes, waves)


def _nanmean(v):
    v = np.asarray(v, dtype=float)
    return float(np.mean(v)) if v.size else math.nan


@dataclass
class AggregateReport:
    config: ExperimentConfig
    replicas: list[ReplicaResult]
    per_time: dict
    lambda_star: float
    omega: float

    @property
    def failed(self) -> list[int]:
        return [r.replica for r in self.replicas if not r.ok]

    @property
    def partial(self) -> bool:
        return bool(self.failed)

    def column(self, t: float, name: str) -> np.ndarray:
        return np.array([row[name] for r in self.replicas if r.ok
                         for row in r.rows if row["t"] == t], dtype=float)

    def mean_hist(self, t: float) -> np.ndarray:
        hs = [r.hist[t] for r in self.replicas if r.ok and t in r.hist]
        return np.mean(hs, axis=0) if hs else np.zeros(0)

    def box_counts(self, t: float) -> np.ndarray:
        return np.array([r.box_counts[t] for r in self.replicas if r.ok and t in r.box_counts])

    def to_json(self) -> dict:
        c = self.config
        return {
            "params": c.params.to_json(),
            "analysis_times": c.analysis_times,
            "replicas": c.replicas,
            "base_seed": c.base_seed,
            "lambda_star": self.lambda_star,
            "omega": self.omega,
            "failed_replicas": self.failed,
            "partial": self.partial,
            "per_time": {repr(t): v for t, v in self.per_time.items()},
            "metadata": {"ks_tolerances": CALIBRATION_NOTE, "box": _box_json(c.box)},
        }

    def write(self, out: Path) -> None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(dumps(self.to_json()) + "\n")
        with open(out / "replicas.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPLICA_COLUMNS)
            for r in self.replicas:
                for row in r.rows:
                    w.writerow([_fmt(row[k]) for k in REPLICA_COLUMNS])


def _box_json(box):
    return [[a, b] for a, b in box]


def _fmt(v):
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return v


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return _fmt(float(obj)) if not math.isfinite(obj) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def dumps(obj) -> str:
    """Deterministic JSON with non-finite floats spelled as strings."""
    return json.dumps(_clean(obj), indent=2, sort_keys=True)


def aggregate(config: ExperimentConfig, results: Sequence[ReplicaResult]) -> AggregateReport:
    """Reduce replica results in replica order, whatever order they arrived in."""
    results = sorted(results, key=lambda r: r.replica)
    p = config.params
    mr = solve_lambda_star(p)
    omega = limit_measure(p, mr).condensate_mass
    alpha = p.dist.alpha
    report = AggregateReport(config, list(results), {}, mr.lambda_star, omega)
    for t in config.analysis_times:
        mf = report.column(t, "mean_fitness")
        frac = report.column(t, "max_fraction")
        entry = {
            "replicas_ok": int(mf.size),
            "mean_fitness_mean": _nanmean(mf),
            "mean_fitness_std": float(np.std(mf, ddof=1)) if mf.size > 1 else math.nan,
            "max_fraction_mean": _nanmean(frac),
            "max_fraction_median": float(np.median(frac)) if frac.size else math.nan,
            "max_fraction_std": float(np.std(frac, ddof=1)) if frac.size > 1 else math.nan,
        }
        if alpha is not None:
            scaled = report.column(t, "scaled_max")
            gaps = report.column(t, "t_times_gap")
            scaled = scaled[np.isfinite(scaled)]
            max_law = st.LimitLaw("max_size_law", alpha, mr.lambda_star, p.gamma)
            gap_law = st.LimitLaw("fitness_gap_gamma", alpha, mr.lambda_star, p.gamma)
            entry["ks_max_size"] = st.ks_distance(scaled, max_law.cdf) if scaled.size >= 2 else math.nan
            entry["ks_fitness_gap"] = st.ks_distance(gaps, gap_law.cdf) if gaps.size >= 2 else math.nan
            entry["fitness_gap_law_applies"] = bool(mr.condensing)
            counts = report.box_counts(t)
            if counts.size >= 2:
                mean, vm = st.poisson_dispersion(counts)
                entry["box_count_mean"] = mean
                entry["box_count_var_over_mean"] = vm
                entry["zeta_box"] = st.zeta_box(alpha, mr.lambda_star, p.gamma, config.box)
        ws = [r.wave[t] for r in report.replicas if r.ok and t in r.wave]
        if ws and alpha is not None:
            emp = np.mean(ws, axis=0)
            conj = st.conjectured_wave(config.wave_grid, omega, alpha)
            entry["wave_x"] = list(map(float, config.wave_grid))
            entry["wave_empirical"] = emp.tolist()
            entry["wave_conjectured"] = conj.tolist()
            entry["wave_linf"] = float(np.max(np.abs(emp - conj)))
        hist = report.mean_hist(t)
        if hist.size:
            entry["mean_fitness_hist"] = hist.tolist()
        report.per_time[t] = entry
    return report


def run_experiment(config: ExperimentConfig) -> AggregateReport:
    """Run every replica (in parallel when ``threads > 1``) and aggregate."""
    idx = range(config.replicas)
    if config.threads > 1:
        results = Parallel(n_jobs=config.threads)(delayed(run_replica)(config, r) for r in idx)
    else:
        results = [run_replica(config, r) for r in idx]
    return aggregate(config, results)


@dataclass
class SweepTable:
    rows: list[dict]
    monotone_fraction: float  # share of replicas with weakly decreasing max_fraction
    report: AggregateReport

    def write_csv(self, path) -> None:
        cols = ["t", "max_fraction_median", "max_fraction_mean", "ks_max_size", "ks_fitness_gap"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for row in self.rows:
                w.writerow([_fmt(row.get(c, math.nan)) for c in cols])


def convergence_sweep(config: ExperimentConfig, time_grid: Sequence[float]) -> SweepTable:
    """Trend of the largest-family fraction and KS distances over ``time_grid``."""
    cfg = ExperimentConfig(**{**config.__dict__, "analysis_times": list(time_grid)})
    report = run_experiment(cfg)
    rows = []
    for t in cfg.analysis_times:
        e = report.per_time[t]
        rows.append({"t": t, **{k: e.get(k, math.nan) for k in (
            "max_fraction_median", "max_fraction_mean", "ks_max_size", "ks_fitness_gap")}})
    mono = []
    for r in report.replicas:
        if not r.ok:
            continue
        f = [row["max_fraction"] for row in r.rows]
        mono.append(all(b <= a for a, b in zip(f, f[1:])))
    return SweepTable(rows, float(np.mean(mono)) if mono else math.nan, report)
