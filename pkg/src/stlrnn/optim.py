"""Box-constrained nonlinear optimization and the reference-control solvers.

``minimize`` is a spectral projected-gradient method (Barzilai-Borwein steps,
nonmonotone Armijo line search) driven by central finite differences.
Inequality constraints ``g(x) > 0`` enter through an exterior quadratic
penalty escalated over three rounds, followed by a feasibility polish.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .stl.compiled import CompiledFormula
from .stl.formula import Always, Interval, Trace, horizon
from .systems import SystemModel, rollout_batch

PENALTY_SCHEDULE = (1e1, 1e3, 1e5)
# penalty rounds aim this far inside the constraint boundary
PENALTY_SHIFT = 1e-5


@dataclass
class OptimizerSettings:
    max_iters: int = 200
    grad_step: float = 1e-5
    tol: float = 1e-6
    restarts: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1 or self.restarts < 1:
            raise ValueError("max_iters and restarts must be >= 1")
        if not (self.grad_step > 0 and self.tol > 0):
            raise ValueError("grad_step and tol must be positive")


@dataclass
class NlpProblem:
    """Minimize ``objective(x)`` over a box subject to ``g(x) > 0`` for each constraint.

    ``batch``, when given, maps an array of points (B, dim) to
    ``(objective values (B,), constraint values (B, n_constraints))`` and is
    used instead of the per-point callables.
    """

    objective: Callable
    lower: np.ndarray
    upper: np.ndarray
    constraints: Sequence[Callable] = field(default_factory=list)
    batch: Optional[Callable] = None
    n_constraints: Optional[int] = None

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1 or self.lower.size == 0:
            raise ValueError("box bounds must be matching non-empty vectors")
        if np.any(self.lower > self.upper):
            raise ValueError("inconsistent box: lower > upper")
        if self.n_constraints is None:
            self.n_constraints = len(self.constraints)

    @property
    def dim(self):
        return self.lower.size

    def evaluate(self, X):
        X = np.atleast_2d(X)
        if self.batch is not None:
            f, g = self.batch(X)
            return np.asarray(f, dtype=float), np.asarray(g, dtype=float).reshape(len(X), self.n_constraints)
        f = np.array([self.objective(x) for x in X], dtype=float)
        g = np.array([[c(x) for c in self.constraints] for x in X], dtype=float).reshape(len(X), -1)
        return f, g


class MinimizeResult(NamedTuple):
    x: np.ndarray
    value: float
    feasible: bool


class _Tracker:
    """Remembers the best feasible point and the least-violating point seen."""

    def __init__(self, problem):
        self.p = problem
        self.best_x = None
        self.best_f = np.inf
        self.least_x = None
        self.least_v = np.inf
        self.least_f = np.inf

    def __call__(self, X, f, g):
        inside = np.all((X >= self.p.lower) & (X <= self.p.upper), axis=1)
        viol = np.sum(np.maximum(0.0, -g), axis=1) if g.shape[1] else np.zeros(len(X))
        feas = inside & (np.all(g > 0, axis=1) if g.shape[1] else True)
        if np.any(feas):
            i = np.flatnonzero(feas)[np.argmin(f[feas])]
            if f[i] < self.best_f:
                self.best_f, self.best_x = float(f[i]), X[i].copy()
        if np.any(inside):
            cand = np.flatnonzero(inside)
            i = cand[np.lexsort((f[cand], viol[cand]))[0]]
            if (viol[i], f[i]) < (self.least_v, self.least_f):
                self.least_v, self.least_f, self.least_x = float(viol[i]), float(f[i]), X[i].copy()

    @property
    def feasible(self):
        return self.best_x is not None


def fd_gradient(fun, x, h):
    """Value and central-difference gradient of a batched function (B, d) -> (B,).

    All 2d + 1 points go through ``fun`` in one call.
    """
    d = x.size
    eye = np.eye(d) * h
    vals = fun(np.vstack([x[None], x + eye, x - eye]))
    return vals[0], (vals[1:d + 1] - vals[d + 1:]) / (2 * h)


def _spg(merit, x, lower, upper, settings, stop=None):
    """Spectral projected gradient on ``merit`` (batched: (B, d) -> (B,))."""
    history = []
    amin, amax = 1e-10, 1e10

    def value_and_grad(x):
        return fd_gradient(merit, x, settings.grad_step)

    fx, gx = value_and_grad(x)
    pg = np.clip(x - gx, lower, upper) - x
    alpha = 1.0 / max(np.max(np.abs(pg)), 1e-12)
    alpha = min(max(alpha, amin), amax)
    for _ in range(settings.max_iters):
        if stop is not None and stop():
            break
        pg = np.clip(x - gx, lower, upper) - x
        if np.max(np.abs(pg)) < settings.tol:
            break
        direction = np.clip(x - alpha * gx, lower, upper) - x
        slope = float(gx @ direction)
        if slope >= 0:
            break
        history.append(fx)
        fref = max(history[-10:])
        lam = 1.0
        xn = x + direction
        fn = merit(xn[None])[0]
        if fn > fref + 1e-4 * slope:
            lams = 0.5 ** np.arange(1, 12)
            cands = x + lams[:, None] * direction
            vals = merit(cands)
            ok = np.flatnonzero(vals <= fref + 1e-4 * lams * slope)
            if ok.size == 0:
                break
            lam = lams[ok[0]]
            xn, fn = cands[ok[0]], vals[ok[0]]
        if lam * np.max(np.abs(direction)) < 1e-14:
            break
        fn, gn = value_and_grad(xn)
        s, y = xn - x, gn - gx
        sy = float(s @ y)
        alpha = min(max(float(s @ s) / sy, amin), amax) if sy > 0 else amax
        x, fx, gx = xn, fn, gn
    return x


def minimize(p: NlpProblem, x0, s: OptimizerSettings | None = None) -> MinimizeResult:
    """Local minimization from ``x0``; returns the best point found.

    If ``x0`` is feasible the returned value never exceeds ``objective(x0)``.
    ``feasible`` is true iff every constraint is strictly positive at ``x``.
    """
    s = s or OptimizerSettings()
    lo, hi = p.lower, p.upper
    x = np.clip(np.asarray(x0, dtype=float).ravel(), lo, hi)
    if x.size != p.dim:
        raise ValueError(f"x0 has size {x.size}, problem dimension is {p.dim}")
    track = _Tracker(p)

    def evaluate(X):
        f, g = p.evaluate(X)
        track(X, f, g)
        return f, g

    if p.n_constraints == 0:
        x = _spg(lambda X: evaluate(X)[0], x, lo, hi, s)
    else:
        _, g0 = evaluate(x[None])
        # from a feasible start the weakest penalty only invites a jump into another basin
        schedule = PENALTY_SCHEDULE[1:] if np.all(g0 > 0) else PENALTY_SCHEDULE
        for mu in schedule:
            def merit(X, mu=mu):
                f, g = evaluate(X)
                return f + mu * np.sum(np.maximum(0.0, PENALTY_SHIFT - g) ** 2, axis=1)

            x = _spg(merit, x, lo, hi, s)
        if not track.feasible:
            x = track.least_x if track.least_x is not None else x

            def violation(X):
                _, g = evaluate(X)
                return np.sum(np.maximum(0.0, PENALTY_SHIFT - g) ** 2, axis=1)

            x = _spg(violation, x, lo, hi, s, stop=lambda: track.feasible)
    evaluate(x[None])
    if track.feasible:
        return MinimizeResult(track.best_x, track.best_f, True)
    return MinimizeResult(track.least_x, track.least_f, False)


def multistart(p: NlpProblem, starts, s: OptimizerSettings | None = None) -> MinimizeResult:
    """Run :func:`minimize` from each start; feasible results beat infeasible ones."""
    best = None
    for x0 in starts:
        r = minimize(p, x0, s)
        if best is None or (r.feasible, -r.value) > (best.feasible, -best.value):
            best = r
    return best


def flatten_controls(u):
    return np.asarray(u, dtype=float).reshape(-1)


def unflatten_controls(x, m):
    return np.asarray(x, dtype=float).reshape(-1, m)


def _starts(model: SystemModel, length, s: OptimizerSettings, warm_start=None):
    """Zero (or warm) start followed by uniform draws in the control box."""
    m = model.control_dim
    lo, hi = np.tile(model.bounds.lo, length), np.tile(model.bounds.hi, length)
    first = np.zeros(length * m) if warm_start is None else flatten_controls(warm_start)
    rng = np.random.default_rng(s.seed)
    starts = [np.clip(first, lo, hi)]
    for _ in range(s.restarts - 1):
        starts.append(rng.uniform(lo, hi))
    return starts, lo, hi


def _as_compiled(formula, dim):
    return formula if isinstance(formula, CompiledFormula) else CompiledFormula(formula, dim)


@dataclass
class ReferenceProblem:
    """Full-horizon reference problem at time ``k``.

    ``history`` holds q_0..q_{k-1} (None when k = 0) and ``state`` is q_k.
    """

    model: SystemModel
    formula: object
    state: np.ndarray
    k: int
    K: int
    lam: float = 0.0
    history: Optional[Trace] = None

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=float)
        self.compiled = _as_compiled(self.formula, self.model.state_dim)
        if self.K < self.compiled.horizon:
            raise ValueError(f"K = {self.K} is shorter than the formula horizon {self.compiled.horizon}")
        if not 0 <= self.k <= self.K - 1:
            raise ValueError(f"k = {self.k} outside [0, {self.K - 1}]")
        hist_len = 0 if self.history is None else len(self.history)
        if hist_len != self.k or (self.history is not None and self.history.start_index != 0):
            raise ValueError(f"history must cover times 0..{self.k - 1}, got {hist_len} samples")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")


class ReferenceSolution(NamedTuple):
    controls: np.ndarray
    robustness: float
    feasible: bool


def reference_objective(rp: ReferenceProblem):
    """Batched minimization encoding: -(robustness - lam * 1/2 sum |u|^2)."""
    m = rp.model.control_dim
    hist = None if rp.history is None else rp.history.states

    def batch(X):
        u = X.reshape(len(X), -1, m)
        states = rollout_batch(rp.model, rp.state, u)
        if hist is not None:
            states = np.concatenate([np.broadcast_to(hist, (len(X),) + hist.shape), states], axis=1)
        rob = rp.compiled.robustness(states, 0)
        cost = 0.5 * np.sum(X * X, axis=1)
        return -(rob - rp.lam * cost), np.zeros((len(X), 0))

    return batch


def solve_reference_control(rp: ReferenceProblem, s: OptimizerSettings | None = None,
                            warm_start=None) -> ReferenceSolution:
    """Controls u_k..u_{K-1} maximizing robustness of history + rollout minus the control cost."""
    s = s or OptimizerSettings()
    length = rp.K - rp.k
    starts, lo, hi = _starts(rp.model, length, s, warm_start)
    batch = reference_objective(rp)
    problem = NlpProblem(objective=lambda x: batch(x[None])[0][0], lower=lo, upper=hi, batch=batch)
    res = multistart(problem, starts, s)
    u = unflatten_controls(res.x, rp.model.control_dim)
    rob = float(-batch(res.x[None])[0][0] + rp.lam * 0.5 * np.sum(res.x**2))
    return ReferenceSolution(u, rob, True)


@dataclass
class MpcProblem:
    """Receding-horizon reference problem for ``G[0,k1] phi``.

    ``history`` holds the min(k, h_phi - 1) states preceding q_k (None if k = 0).
    """

    model: SystemModel
    phi: object
    k1: int
    h_p: int
    state: np.ndarray
    k: int
    lam: float = 0.0
    history: Optional[Trace] = None

    def __post_init__(self):
        self.state = np.asarray(self.state, dtype=float)
        self.phi_formula = self.phi.formula if isinstance(self.phi, CompiledFormula) else self.phi
        self.compiled = _as_compiled(self.phi, self.model.state_dim)
        self.h_phi = self.compiled.horizon
        if self.h_phi < 1:
            raise ValueError("inner formula needs horizon >= 1")
        if self.k1 < 0 or self.h_p < 0:
            raise ValueError("k1 and h_p must be nonnegative")
        if not 0 <= self.k <= self.K - 1:
            raise ValueError(f"k = {self.k} outside [0, {self.K - 1}]")
        want = min(self.k, self.h_phi - 1)
        have = 0 if self.history is None else len(self.history)
        if have != want:
            raise ValueError(f"history window must hold {want} states, got {have}")

    @property
    def K(self):
        return self.k1 + self.h_phi

    @property
    def H(self):
        """Planning length, shortened near the end of the task."""
        return min(self.h_p + self.h_phi, self.K - self.k)

    @property
    def objective_windows(self):
        """Window starts whose robustness is maximized."""
        return list(range(self.k, min(self.k + self.h_p, self.k1) + 1))

    @property
    def constraint_windows(self):
        """Earlier window starts that must keep positive robustness."""
        starts = (self.k - self.h_phi + 1 + i for i in range(self.h_phi - 1))
        return [j for j in starts if 0 <= j <= self.k1]


def mpc_objective(mp: MpcProblem):
    m = mp.model.control_dim
    hist = None if mp.history is None else mp.history.states
    offset = 0 if hist is None else len(hist)
    first = mp.k - offset
    obj_rows = [j - first for j in mp.objective_windows]
    con_rows = [j - first for j in mp.constraint_windows]
    window = None
    if obj_rows:
        span = obj_rows[-1] - obj_rows[0]
        window = _as_compiled(Always(Interval(0, span), mp.phi_formula), mp.model.state_dim)

    def batch(X):
        u = X.reshape(len(X), -1, m)
        states = rollout_batch(mp.model, mp.state, u)
        if hist is not None:
            states = np.concatenate([np.broadcast_to(hist, (len(X),) + hist.shape), states], axis=1)
        g = np.stack([mp.compiled.robustness(states, r) for r in con_rows], axis=1) if con_rows \
            else np.zeros((len(X), 0))
        if window is not None:
            rob = window.robustness(states, obj_rows[0])
        else:
            rob = _agm_and_rows(g)
        cost = 0.5 * np.sum(X * X, axis=1)
        return -(rob - mp.lam * cost), g

    return batch


def _agm_and_rows(g):
    pos = g > 0
    geo = np.expm1(np.mean(np.log1p(np.clip(np.where(pos, g, 0.0), -1, 1)), axis=1))
    neg = np.sum(np.where(pos, 0.0, g), axis=1) / g.shape[1]
    return np.where(pos.all(axis=1), geo, neg)


def solve_reference_control_mpc(mp: MpcProblem, s: OptimizerSettings | None = None,
                                warm_start=None) -> ReferenceSolution:
    """Controls u_k..u_{k+H-1}; ``feasible`` reports whether every earlier window stays positive."""
    s = s or OptimizerSettings()
    H = mp.H
    if warm_start is not None:
        warm_start = np.asarray(warm_start, dtype=float).reshape(-1, mp.model.control_dim)
        warm_start = _fit_length(warm_start, H)
    starts, lo, hi = _starts(mp.model, H, s, warm_start)
    batch = mpc_objective(mp)
    nc = len(mp.constraint_windows)
    problem = NlpProblem(objective=lambda x: batch(x[None])[0][0], lower=lo, upper=hi,
                         batch=batch, n_constraints=nc)
    res = multistart(problem, starts, s)
    f, g = batch(res.x[None])
    rob = float(-f[0] + mp.lam * 0.5 * np.sum(res.x**2))
    return ReferenceSolution(unflatten_controls(res.x, mp.model.control_dim), rob, res.feasible)


def _fit_length(u, length):
    """Truncate, or pad by repeating the last control."""
    if len(u) >= length:
        return u[:length]
    return np.vstack([u, np.repeat(u[-1:], length - len(u), axis=0)])


def shift_warm_start(u, length=None):
    """Tail of the previous solution extended by its last control."""
    u = np.asarray(u, dtype=float)
    if len(u) <= 1:
        return u if length is None else _fit_length(u, length)
    nxt = np.vstack([u[1:], u[-1:]])
    return nxt if length is None else _fit_length(nxt, length)


__all__ = [
    "MinimizeResult", "MpcProblem", "NlpProblem", "OptimizerSettings", "ReferenceProblem",
    "ReferenceSolution", "fd_gradient", "flatten_controls", "horizon", "minimize", "multistart",
    "reference_objective", "mpc_objective", "shift_warm_start", "solve_reference_control",
    "solve_reference_control_mpc", "unflatten_controls",
]
