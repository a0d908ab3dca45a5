"""Command-line front end.

Subcommands: ``check``, ``simulate``, ``limits``, ``wave``, ``bubbles``.
Exit codes: 0 success, 2 configuration error, 3 resource abort.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import config as cfg
from . import statistics as st
from .engine import SnapshotPlan, StopRule, run
from .malthus import summary
from .mc import _fmt, dumps, run_experiment

log = logging.getLogger("rbpsim")

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE = 0, 2, 3

FAMILY_COLUMNS = ("family_id", "birth_time", "fitness", "size")
GAMMA_COLUMNS = ("rel_birth", "scaled_gap", "scaled_size")
WAVE_COLUMNS = ("x", "empirical", "conjectured")
BUBBLE_COLUMNS = ("birth_time", "fitness", "size")


class ResourceAbort(RuntimeError):
    pass


def _label(t: float) -> str:
    return f"t{t:g}"


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_json(path: Path, obj) -> None:
    path.write_text(dumps(obj) + "\n")


def _families_rows(snap):
    for i in range(snap.M):
        yield (i + 1, float(snap.birth_time[i]), float(snap.fitness[i]), int(snap.size[i]))


# ---------------------------------------------------------------------------
# subcommands


def cmd_check(conf: cfg.RunConfig, out: Path | None) -> dict:
    s = summary(conf.params)
    res = {k: s[k] for k in ("condensing", "criterion_value", "lambda_star", "omega", "limit_mean")}
    print(dumps(res))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        _write_json(out / "check.json", res)
    return res


def _snapshot_json(snap, params) -> dict:
    ef = st.empirical_fitness(snap)
    lf = st.largest_family(snap, snap.T_of_t, params.gamma)
    return {
        "time": snap.time, "N": snap.N, "M": snap.M, "total_weight": snap.total_weight,
        "T_of_t": snap.T_of_t, "n_of_t": snap.n_of_t, "mean_fitness": ef.mean_fitness,
        "largest": {"index": lf.index + 1, "size": lf.size, "fitness": lf.fitness,
                    "birth_time": lf.birth_time, "fraction": lf.fraction},
    }


def _emit_snapshot(out: Path, label: str, snap, params) -> None:
    _write_csv(out / f"families_{label}.csv", FAMILY_COLUMNS, _families_rows(snap))
    _write_json(out / f"snapshot_{label}.json", _snapshot_json(snap, params))
    if snap.T_of_t is not None:
        g = st.gamma_points(snap, snap.T_of_t, params.gamma)
        _write_csv(out / f"gamma_points_{label}.csv", GAMMA_COLUMNS,
                   zip(g.rel_birth.tolist(), g.scaled_gap.tolist(), g.scaled_size.tolist()))


def cmd_simulate(conf: cfg.RunConfig, out: Path) -> dict:
    """One run; per-snapshot ``families_*.csv`` plus ``summary.json``.

    The state at the stop is always written as ``families_final.csv``.
    """
    p = conf.params
    stop = conf.stop_rule()
    windows = p.dist.alpha is not None
    plan = SnapshotPlan.from_times(p, conf.analysis_times, windows=windows)
    res = run(p, conf.seed, stop, plan, memory_cap=conf.memory_cap, final_snapshot=True)
    out.mkdir(parents=True, exist_ok=True)
    for snap in res.snapshots:
        _emit_snapshot(out, _label(snap.time), snap, p)
    if res.final is not None:
        _emit_snapshot(out, "final", res.final, p)
    summ = res.summary()
    cfg.validate_summary(summ)
    _write_json(out / "summary.json", summ)
    log.info("simulate: N=%d M=%d clock=%.6g events=%d", res.N, res.M, res.clock, res.events)
    if res.partial:
        raise ResourceAbort(f"memory cap reached at N={res.N}, M={res.M}")
    return summ


def cmd_limits(conf: cfg.RunConfig, out: Path):
    report = run_experiment(conf.experiment())
    report.write(out)
    for t, e in report.per_time.items():
        log.info("limits t=%g: mean fitness %.4f, KS max %.4f, KS gap %.4f", t,
                 e["mean_fitness_mean"], e.get("ks_max_size", math.nan),
                 e.get("ks_fitness_gap", math.nan))
    if report.partial:
        raise ResourceAbort(f"replicas {report.failed} hit the memory cap; report is partial")
    return report


def cmd_wave(conf: cfg.RunConfig, out: Path):
    if conf.params.dist.alpha is None:
        raise cfg.ConfigError("wave: the fitness law needs a tail index")
    t = conf.wave_time if conf.wave_time is not None else (
        conf.analysis_times[-1] if conf.analysis_times else None)
    if t is None:
        raise cfg.ConfigError("wave: give wave.time or analysis_times")
    ex = conf.experiment([t], {"wave": True, "gamma_points": False, "fitness_hist": False})
    report = run_experiment(ex)
    out.mkdir(parents=True, exist_ok=True)
    e = report.per_time[float(t)]
    if "wave_empirical" not in e:
        raise ResourceAbort("no replica finished; wave is unavailable")
    _write_csv(out / "wave.csv", WAVE_COLUMNS,
               zip(e["wave_x"], e["wave_empirical"], e["wave_conjectured"]))
    linf = e["wave_linf"]
    _write_json(out / "wave.json", {
        "time": float(t), "replicas": conf.replicas, "replicas_ok": e["replicas_ok"],
        "omega": report.omega, "alpha": conf.params.dist.alpha, "linf": linf,
        "failed_replicas": report.failed,
    })
    if not math.isfinite(linf):
        raise ResourceAbort("wave L-infinity distance is not finite")
    log.warning("wave t=%g: L-infinity distance to the conjectured profile %.6f", t, linf)
    if report.partial:
        raise ResourceAbort(f"replicas {report.failed} hit the memory cap; wave is partial")
    return linf


def bubble_rows(snap, size_floor: int = 2):
    keep = np.flatnonzero(snap.size >= size_floor)
    return [(float(snap.birth_time[i]), float(snap.fitness[i]), int(snap.size[i])) for i in keep]


def bubble_svg(rows, t_max: float, width: int = 720, height: int = 480,
               max_radius: float = 40.0) -> str:
    """Circles at ``(birth_time, fitness)`` with radius ``c * sqrt(size)``, so area tracks size."""
    left, right, top, bottom = 60.0, 20.0, 20.0, 50.0
    pw, ph = width - left - right, height - top - bottom
    zmax = max((r[2] for r in rows), default=1)
    c = max_radius / math.sqrt(zmax)
    t_max = t_max if t_max > 0 else 1.0

    def X(tau):
        return left + pw * tau / t_max

    def Y(f):
        return top + ph * (1.0 - f)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<desc>radius = {c:.9g} * sqrt(size)</desc>',
        f'<g id="axes" stroke="black" stroke-width="1">',
        f'<line x1="{left:.3f}" y1="{Y(0):.3f}" x2="{X(t_max):.3f}" y2="{Y(0):.3f}"/>',
        f'<line x1="{left:.3f}" y1="{Y(0):.3f}" x2="{left:.3f}" y2="{Y(1):.3f}"/>',
        "</g>",
        '<g id="labels" font-family="sans-serif" font-size="12">',
        f'<text x="{left + pw / 2:.3f}" y="{height - 12:.3f}" text-anchor="middle">birth time</text>',
        f'<text x="14" y="{top + ph / 2:.3f}" transform="rotate(-90 14 {top + ph / 2:.3f})" '
        f'text-anchor="middle">fitness</text>',
    ]
    for k in range(5):
        tau = t_max * k / 4
        out.append(f'<text x="{X(tau):.3f}" y="{Y(0) + 16:.3f}" text-anchor="middle">{tau:g}</text>')
        f = k / 4
        out.append(f'<text x="{left - 6:.3f}" y="{Y(f) + 4:.3f}" text-anchor="end">{f:g}</text>')
    out.append("</g>")
    out.append('<g id="families" fill="steelblue" fill-opacity="0.4" stroke="navy" stroke-width="0.5">')
    for tau, f, z in rows:
        out.append(f'<circle cx="{X(tau):.6f}" cy="{Y(f):.6f}" r="{c * math.sqrt(z):.9g}" '
                   f'data-size="{z}"/>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def cmd_bubbles(conf: cfg.RunConfig, out: Path):
    p = conf.params
    t = conf.bubble_time
    if t is None:
        t = conf.analysis_times[-1] if conf.analysis_times else None
    if t is None and conf.stop is not None:
        t = conf.stop.max_time
    if t is None:
        raise cfg.ConfigError("bubbles: give bubbles.time, analysis_times or stop.max_time")
    res = run(p, conf.seed, StopRule(max_time=t), memory_cap=conf.memory_cap,
              final_snapshot=True)
    if res.partial or res.final is None:
        raise ResourceAbort(f"memory cap reached at N={res.N}, M={res.M}")
    rows = bubble_rows(res.final, conf.size_floor)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "bubbles.csv", BUBBLE_COLUMNS, rows)
    if conf.svg:
        (out / "bubbles.svg").write_text(bubble_svg(rows, float(t)))
    log.info("bubbles t=%g: %d of %d families with size >= %d", t, len(rows), res.M,
             conf.size_floor)
    return rows


COMMANDS = {
    "check": cmd_check,
    "simulate": cmd_simulate,
    "limits": cmd_limits,
    "wave": cmd_wave,
    "bubbles": cmd_bubbles,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rbpsim", description="Reinforced branching process simulator.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON configuration file")
    ap.add_argument("--out", default=None, help="output directory (default: ./out)")
    ap.add_argument("--seed", type=int, default=None, help="override the configured seed")
    ap.add_argument("--threads", type=int, default=None, help="worker processes for replicas")
    ap.add_argument("--quiet", action="store_true", help="only warnings and errors")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        conf = cfg.load(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise cfg.ConfigError("--seed must be non-negative")
            conf.seed = args.seed
        if args.threads is not None:
            if args.threads < 1:
                raise cfg.ConfigError("--threads must be positive")
            conf.threads = args.threads
        out = Path(args.out) if args.out is not None else None
        if args.command != "check" and out is None:
            out = Path("out")
        COMMANDS[args.command](conf, out)
    except ValueError as e:  # ConfigError and parameter validation
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ResourceAbort, MemoryError) as e:
        print(f"resource abort: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
