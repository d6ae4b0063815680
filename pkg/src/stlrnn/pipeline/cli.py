"""Command line entry point: ``stlrnn <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..learn import TrainConfig, load_params, save_params, train
from ..stl import (
    FormulaSyntaxError,
    Trace,
    TraceTooShortError,
    eval_boolean,
    eval_robustness_agm,
    eval_robustness_traditional,
    parse_formula,
)
from ..systems import ControlBounds
from .dataset import EmptyDatasetError, generate_dataset, read_dataset
from .evaluate import evaluate, write_report
from .plot import emit_plot_data
from .runs import direct_solve_trajectory, run_rnn_controller
from .scenario import load_scenario

log = logging.getLogger("stlrnn")


def _gen_dataset(args):
    try:
        s = generate_dataset(args.scenario, args.count, args.out, args.seed, args.workers)
    except EmptyDatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"accepted {s.accepted}/{s.attempts} (mean robustness {s.mean_robustness:.4f}) -> {args.out}")
    return 0


def _train(args):
    records, bounds = read_dataset(args.data)
    if not records:
        print(f"error: no records in {args.data}", file=sys.stderr)
        return 1
    if args.scenario:
        cb = load_scenario(args.scenario).model.bounds
    elif bounds is not None:
        cb = ControlBounds(bounds[0], bounds[1])
    else:
        print("error: dataset has no control bounds; pass --scenario", file=sys.stderr)
        return 1
    cfg = TrainConfig(epochs=args.epochs, seed=args.seed, learning_rate=args.lr,
                      hidden_size=args.hidden, batch_size=args.batch_size)
    res = train(records, cfg, cb)
    save_params(res.params, args.out)
    log_path = Path(str(args.out) + ".train.json")
    log_path.write_text(json.dumps({"train_loss": res.train_loss, "val_loss": res.val_loss,
                                    "best_epoch": res.best_epoch, "val_indices": res.val_indices}) + "\n")
    print(f"trained on {len(records)} records; loss {res.train_loss[0]:.4g} -> {res.train_loss[-1]:.4g}, "
          f"best epoch {res.best_epoch} -> {args.out}")
    return 0


def _eval(args):
    params = load_params(args.params)
    report = evaluate(params, args.scenario, args.runs, args.seed, args.direct_runs)
    write_report(report, args.report)
    print(f"success {report['success_rate']:.3f}, mean robustness {report['mean_robustness_satisfying']:.4f}, "
          f"speedup {report['speedup']:.0f}x -> {args.report}")
    return 0


def _run(args):
    sc = load_scenario(args.scenario)
    if args.params:
        r = run_rnn_controller(load_params(args.params), sc, args.seed)
    else:
        r = direct_solve_trajectory(sc, args.seed)
    print(f"status {r.status}, robustness {r.robustness:.4f}, satisfied {r.satisfied}, safe {r.safe}")
    if args.plot:
        for path in emit_plot_data(r, sc, args.plot):
            print(f"wrote {path}")
    return 0 if r.completed else 2


def _read_trace(path):
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rows.append([float(v) for v in line.split(",")])
        except ValueError:
            if rows:
                raise
            # header line
    return np.array(rows)


def _robustness(args):
    table = load_scenario(args.scenario).table
    try:
        f = parse_formula(args.formula, table)
    except FormulaSyntaxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    tr = Trace(_read_trace(args.trace), 0)
    try:
        if args.semantics == "boolean":
            print(eval_boolean(f, tr, args.time))
        elif args.semantics == "traditional":
            print(repr(eval_robustness_traditional(f, tr, args.time).value))
        else:
            print(repr(eval_robustness_agm(f, tr, args.time).value))
    except TraceTooShortError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def build_parser():
    ap = argparse.ArgumentParser(prog="stlrnn", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="generate safe satisfying trajectories with the direct solution")
    p.add_argument("--scenario", required=True, help="case1, case2 or a YAML/JSON file")
    p.add_argument("--count", type=int, required=True, help="number of attempts M")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=_gen_dataset)

    p = sub.add_parser("train", help="fit the LSTM controller to a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--scenario", help="take control bounds from this scenario")
    p.set_defaults(func=_train)

    p = sub.add_parser("eval", help="closed-loop evaluation of a trained controller")
    p.add_argument("--scenario", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--report", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--direct-runs", type=int, default=5, help="direct solves used for timing")
    p.set_defaults(func=_eval)

    p = sub.add_parser("run", help="one closed-loop run (direct solution without --params)")
    p.add_argument("--scenario", required=True)
    p.add_argument("--params")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plot", help="output .svg (plus .json) or .json")
    p.set_defaults(func=_run)

    p = sub.add_parser("robustness", help="evaluate a formula on a CSV trace")
    p.add_argument("--formula", required=True)
    p.add_argument("--trace", required=True, help="CSV, one state per row")
    p.add_argument("--semantics", choices=("agm", "traditional", "boolean"), default="agm")
    p.add_argument("--scenario", default="case1", help="scenario providing the predicate table")
    p.add_argument("--time", type=int, default=0)
    p.set_defaults(func=_robustness)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
