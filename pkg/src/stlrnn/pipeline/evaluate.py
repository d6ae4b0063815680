"""Closed-loop evaluation of a trained controller against the direct solution."""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from ..learn import LstmParams
from .dataset import EVAL_TAG, run_seeds
from .runs import CBF_INFEASIBLE, direct_solve_trajectory, run_rnn_controller, window_robustness
from .scenario import load_scenario

# keys that depend on wall-clock time; everything else is reproducible from seeds
TIMING_KEYS = (
    "mean_step_time_rnn", "median_step_time_rnn",
    "mean_step_time_direct", "median_step_time_direct", "speedup",
)


def _step_times(results):
    # the first step of every run pays for lazy initialization; drop it
    return [t for r in results for t in r.step_times[1:]]


def _mean(xs):
    return float(np.mean(xs)) if len(xs) else math.nan


def _median(xs):
    return float(np.median(xs)) if len(xs) else math.nan


def _run_entry(r, sc):
    d = {"seed": r.seed, "robustness": r.robustness, "satisfied": r.satisfied,
         "safe": r.safe, "status": r.status}
    if sc.mode == "mpc" and r.completed:
        d["windows_ok"] = bool(min(window_robustness(sc, r.trajectory)) > 0)
    return d


def evaluate(params: LstmParams, sc, n_runs: int, seed: int = 0, n_direct: int = 5,
             extra_obstacles: bool = True, keep_results: bool = False) -> dict:
    """Success rate, robustness and per-step timing over ``n_runs`` random runs.

    ``n_direct`` of the same seeds are also solved with the direct solution
    to time it. Run seeds come from a stream disjoint from dataset seeds.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    sc = load_scenario(sc)
    seeds = run_seeds(seed, n_runs, EVAL_TAG)
    results = [run_rnn_controller(params, sc, s, extra_obstacles) for s in seeds]
    direct = [direct_solve_trajectory(sc, s, extra_obstacles) for s in seeds[:n_direct]]

    t_rnn, t_direct = _step_times(results), _step_times(direct)
    satisfying = [r.robustness for r in results if r.success]
    report = {
        "scenario": sc.name,
        "scenario_hash": sc.hash,
        "n_runs": n_runs,
        "seeds": seeds,
        "success_rate": sum(r.success for r in results) / n_runs,
        "mean_robustness_satisfying": _mean(satisfying),
        "mean_robustness_all": _mean([r.robustness for r in results if r.completed]),
        "n_satisfied": sum(r.satisfied for r in results),
        "n_safe": sum(r.safe for r in results),
        "n_cbf_infeasible": sum(r.status == CBF_INFEASIBLE for r in results),
        "direct_seeds": seeds[:n_direct],
        "direct_success_rate": _mean([r.success for r in direct]),
        "mean_step_time_rnn": _mean(t_rnn),
        "median_step_time_rnn": _median(t_rnn),
        "mean_step_time_direct": _mean(t_direct),
        "median_step_time_direct": _median(t_direct),
        "runs": [_run_entry(r, sc) for r in results],
    }
    report["speedup"] = (report["mean_step_time_direct"] / report["mean_step_time_rnn"]
                         if t_rnn and t_direct else math.nan)
    if keep_results:
        report["_results"] = results
        report["_direct_results"] = direct
    return report


def without_timing(report: dict) -> dict:
    return {k: v for k, v in report.items() if k not in TIMING_KEYS and not k.startswith("_")}


def report_json(report: dict) -> str:
    clean = {k: v for k, v in report.items() if not k.startswith("_")}
    return json.dumps(clean, indent=2, sort_keys=True) + "\n"


def write_report(report: dict, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(report_json(report))
