"""Reference (tree-recursive) STL semantics over discrete-time traces.

These evaluators favour clarity over speed and act as the oracle for the
compiled kernels in :mod:`stlrnn.stl.compiled`.
"""

from __future__ import annotations

import math

import numpy as np

from .formula import (
    Always,
    And,
    Atom,
    Eventually,
    Not,
    Or,
    RobustnessValue,
    Trace,
    TrueF,
    horizon,
)


class TraceTooShortError(ValueError):
    def __init__(self, required, available):
        super().__init__(f"trace too short: need samples through absolute time {required - 1}, "
                         f"trace covers up to {available - 1}")
        self.required = required
        self.available = available


def _check_coverage(f, tr: Trace, k: int):
    if k < tr.start_index:
        raise ValueError(f"time {k} precedes trace start {tr.start_index}")
    need = k + horizon(f) + 1
    if need > tr.end_index:
        raise TraceTooShortError(need, tr.end_index)


def agm_and(values):
    """AGM conjunction of child robustness values in [-1, 1]."""
    v = np.asarray(values, dtype=float)
    if np.all(v > 0):
        return float(np.expm1(np.mean(np.log1p(v))))
    return float(np.sum(v[v <= 0]) / v.size)


def agm_or(values):
    """AGM disjunction, the dual of :func:`agm_and`."""
    v = np.asarray(values, dtype=float)
    if np.all(v <= 0):
        return float(-np.expm1(np.mean(np.log1p(-v))))
    return float(np.sum(v[v > 0]) / v.size)


def _boolean(f, s, t):
    if isinstance(f, TrueF):
        return True
    if isinstance(f, Atom):
        return bool(f.pred.value(s[t]) >= 0)
    if isinstance(f, Not):
        return not _boolean(f.arg, s, t)
    if isinstance(f, And):
        return all(_boolean(g, s, t) for g in f.args)
    if isinstance(f, Or):
        return any(_boolean(g, s, t) for g in f.args)
    window = range(t + f.interval.a, t + f.interval.b + 1)
    if isinstance(f, Eventually):
        return any(_boolean(f.arg, s, j) for j in window)
    return all(_boolean(f.arg, s, j) for j in window)


def _traditional(f, s, t):
    if isinstance(f, TrueF):
        return math.inf
    if isinstance(f, Atom):
        return float(f.pred.value(s[t]))
    if isinstance(f, Not):
        return -_traditional(f.arg, s, t)
    if isinstance(f, And):
        return min(_traditional(g, s, t) for g in f.args)
    if isinstance(f, Or):
        return max(_traditional(g, s, t) for g in f.args)
    window = [_traditional(f.arg, s, j) for j in range(t + f.interval.a, t + f.interval.b + 1)]
    return max(window) if isinstance(f, Eventually) else min(window)


def _agm(f, s, t):
    if isinstance(f, TrueF):
        return 1.0
    if isinstance(f, Atom):
        return float(np.clip(f.pred.value(s[t]) / f.pred.scale, -1.0, 1.0))
    if isinstance(f, Not):
        return -_agm(f.arg, s, t)
    if isinstance(f, And):
        return agm_and([_agm(g, s, t) for g in f.args])
    if isinstance(f, Or):
        return agm_or([_agm(g, s, t) for g in f.args])
    window = [_agm(f.arg, s, j) for j in range(t + f.interval.a, t + f.interval.b + 1)]
    return agm_or(window) if isinstance(f, Eventually) else agm_and(window)


def eval_boolean(f, tr: Trace, k: int = 0) -> bool:
    _check_coverage(f, tr, k)
    return _boolean(f, tr.states, k - tr.start_index)


def eval_robustness_traditional(f, tr: Trace, k: int = 0) -> RobustnessValue:
    _check_coverage(f, tr, k)
    return RobustnessValue(_traditional(f, tr.states, k - tr.start_index), "traditional")


def eval_robustness_agm(f, tr: Trace, k: int = 0) -> RobustnessValue:
    _check_coverage(f, tr, k)
    return RobustnessValue(_agm(f, tr.states, k - tr.start_index), "agm")


def concat_traces(history: Trace | None, tail: Trace) -> Trace:
    """Join a history starting at time 0 with the tail that continues it."""
    if history is None or len(history) == 0:
        if tail.start_index != 0:
            raise ValueError(f"tail starts at {tail.start_index} but history is empty")
        return tail
    if history.start_index != 0:
        raise ValueError(f"history must start at time 0, starts at {history.start_index}")
    if tail.start_index != history.end_index:
        raise ValueError(f"index mismatch: history ends at {history.end_index - 1}, "
                         f"tail starts at {tail.start_index}")
    if tail.dim != history.dim:
        raise ValueError(f"dimension mismatch: history {history.dim}, tail {tail.dim}")
    return Trace(np.vstack([history.states, tail.states]), 0)


def eval_robustness_with_history(f, history: Trace | None, tail: Trace) -> RobustnessValue:
    """AGM robustness at time 0 of the history followed by the candidate tail."""
    return eval_robustness_agm(f, concat_traces(history, tail), 0)
