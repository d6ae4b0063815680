"""Dataset generation from the direct solution, JSON Lines storage."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..learn import DatasetRecord
from .runs import direct_solve_trajectory
from .scenario import load_scenario

log = logging.getLogger(__name__)

DATASET_TAG = 0
EVAL_TAG = 1


class EmptyDatasetError(RuntimeError):
    """Every attempted trajectory was rejected."""


def run_seeds(base_seed: int, count: int, tag: int = DATASET_TAG):
    """Per-run seeds; streams with different ``tag`` or ``base_seed`` do not overlap in practice."""
    ss = np.random.SeedSequence([tag, int(base_seed)])
    return [int(s) for s in ss.generate_state(count, dtype=np.uint64) >> np.uint64(1)]


@dataclass
class DatasetSummary:
    attempts: int
    accepted: int
    mean_robustness: float
    rejected_unsatisfied: int
    rejected_unsafe: int
    aborted: int
    unsafe_runs: int  # any status; must stay 0
    scenario_hash: str
    base_seed: int
    seeds: list
    results: list = field(default=None, repr=False)

    def to_dict(self):
        return {k: v for k, v in self.__dict__.items() if k != "results"}


def _attempt(args):
    config, seed = args
    sc = load_scenario(config)
    r = direct_solve_trajectory(sc, seed)
    return seed, r


def _record_json(r, sc):
    return {
        "states": r.trajectory.tolist(),
        "ref_controls": r.reference_controls.tolist(),
        "robustness": r.robustness,
        "barriers": [b.to_dict() for b in r.barriers],
        "seed": r.seed,
        "scenario_hash": sc.hash,
        "control_bounds": [sc.model.bounds.lo.tolist(), sc.model.bounds.hi.tolist()],
    }


def generate_dataset(sc, M: int, out, seed: int = 0, workers: int = 1,
                     keep_results: bool = False) -> DatasetSummary:
    """Run ``M`` direct solutions, keep the safe satisfying ones, write ``out`` and a summary.

    Records are written in seed order whatever the worker count. Raises
    :class:`EmptyDatasetError` (after writing the summary) if nothing was kept.
    With ``keep_results`` every run, kept or not, is attached to the summary.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    sc = load_scenario(sc)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    seeds = run_seeds(seed, M)
    jobs = [(sc.config, s) for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = dict(pool.map(_attempt, jobs, chunksize=max(1, M // (4 * workers))))
    else:
        results = dict(map(_attempt, jobs))

    kept, unsat, unsafe, aborted = [], 0, 0, 0
    for s in seeds:
        r = results[s]
        if not r.completed:
            aborted += 1
        elif not r.safe:
            unsafe += 1
        elif not r.robustness > 0:
            unsat += 1
        else:
            kept.append(r)
    with out.open("w") as fh:
        for r in kept:
            fh.write(json.dumps(_record_json(r, sc)) + "\n")
    mean = float(np.mean([r.robustness for r in kept])) if kept else float("nan")
    ordered = [results[s] for s in seeds]
    summary = DatasetSummary(M, len(kept), mean, unsat, unsafe, aborted,
                             sum(not r.safe for r in ordered), sc.hash, int(seed), seeds,
                             ordered if keep_results else None)
    summary_path(out).write_text(json.dumps(summary.to_dict(), indent=2) + "\n")
    log.info("dataset %s: %d/%d accepted, mean robustness %.4f", out, len(kept), M, mean)
    if not kept:
        raise EmptyDatasetError(f"0 of {M} trajectories were safe and satisfying")
    return summary


def summary_path(out):
    out = Path(out)
    return out.with_name(out.name + ".summary.json")


def read_dataset(path):
    """Load records; returns (records, control_bounds or None)."""
    records, bounds = [], None
    with Path(path).open() as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            meta = {k: d[k] for k in ("barriers", "seed", "scenario_hash") if k in d}
            records.append(DatasetRecord(d["states"], d["ref_controls"], float(d["robustness"]), meta))
            if bounds is None and "control_bounds" in d:
                bounds = d["control_bounds"]
    return records, bounds
