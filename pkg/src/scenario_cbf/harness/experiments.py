"""Experiment drivers behind the CLI subcommands."""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from ..quadcopter import QuadParams, QuadState, evaluate_run, run_closed_loop
from ..scenario import RiskConfig, sample_bound_campi, sample_bound_eq8
from .config import ExperimentConfig

TABLE1_BETA = 0.01
TABLE1_DIMS = 2
# (epsilon, reported N)
TABLE1_ROWS = ((0.1, 216), (0.05, 484), (0.01, 3045), (0.001, 39618))

TABLE1_HEADER = ["epsilon", "N_campi", "N_eq8", "matches_paper"]
SUMMARY_HEADER = ["epsilon", "seed", "time_to_goal_s", "path_length_m", "min_hbar",
                  "incursion_steps", "fallback_steps"]


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def table1_rows():
    out = []
    for eps, reported in TABLE1_ROWS:
        cfg = RiskConfig(eps, TABLE1_BETA, TABLE1_DIMS)
        n_campi = sample_bound_campi(cfg)
        out.append((eps, n_campi, sample_bound_eq8(cfg), n_campi == reported))
    return out


def write_table1(output_dir) -> tuple[Path, bool]:
    """Write ``table1.csv``; returns its path and whether every row matches."""
    rows = table1_rows()
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "table1.csv"
    path.write_text(_csv_text(TABLE1_HEADER, rows), encoding="utf-8", newline="\n")
    return path, all(r[3] for r in rows)


def _eps_tag(eps: float) -> str:
    return repr(float(eps)).replace(".", "p")


def trajectory_name(eps: float, seed: int) -> str:
    return f"traj_eps{_eps_tag(eps)}_seed{seed}"


def _run_one(args):
    quad, start, eps, seed, out_dir = args
    p = quad.with_epsilon(eps)
    log = run_closed_loop(p, QuadState.at_rest(start), seed)
    stem = Path(out_dir) / trajectory_name(eps, seed)
    log.to_csv(stem.with_suffix(".csv"))
    log.write_metadata(stem.with_suffix(".json"))
    s = evaluate_run(log, p)
    return (eps, seed, s.time_to_goal, s.path_length, s.min_hbar,
            s.incursion_steps, s.fallback_steps), log.meta.get("degraded", False)


def run_experiment(cfg: ExperimentConfig):
    """Run every (epsilon, seed) pair; write trajectories, metadata and
    ``summary.csv``. Returns the summary rows in (sweep, seed) order."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / "effective_config.json")
    jobs = [(cfg.quad, list(cfg.start), eps, seed, str(out))
            for eps in cfg.epsilons for seed in cfg.seeds]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    rows = [r for r, _ in results]
    degraded = [(r[0], r[1]) for r, flag in results if flag]
    (out / "summary.csv").write_text(_csv_text(SUMMARY_HEADER, rows),
                                     encoding="utf-8", newline="\n")
    return rows, degraded


def summarize_by_epsilon(rows):
    """Mean time-to-goal and total incursion steps per epsilon."""
    by = {}
    for eps, _seed, ttg, _len, _h, inc, _fb in rows:
        d = by.setdefault(eps, {"ttg": [], "incursions": 0})
        d["ttg"].append(ttg)
        d["incursions"] += inc
    return {eps: {"mean_time_to_goal": sum(v["ttg"]) / len(v["ttg"]),
                  "incursion_steps": v["incursions"]} for eps, v in by.items()}


__all__ = [
    "QuadParams", "SUMMARY_HEADER", "TABLE1_HEADER", "TABLE1_ROWS",
    "run_experiment", "summarize_by_epsilon", "table1_rows", "trajectory_name",
    "write_table1",
]
