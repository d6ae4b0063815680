"""Discrete-time exponential control barrier functions and the safe-control filter."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .optim import NlpProblem, OptimizerSettings, minimize
from .systems import UNICYCLE, OMEGA_EPS, SystemModel, step

AVOID_DISK = "avoid_disk"
STAY_IN_DISK = "stay_in_disk"
# required CBF margin; stands in for the strict inequality
CBF_EPS = 1e-6
# controls are low dimensional: a coarse grid finds every basin cheaply
GRID_STARTS_RESOLUTION = 21


class InfeasibleSafeControl(RuntimeError):
    """No control in the box satisfies every CBF condition."""

    def __init__(self, violated, state):
        names = ", ".join(str(i) for i in violated)
        super().__init__(f"no safe control at state {np.round(state, 6).tolist()}; violated barriers: {names}")
        self.violated = list(violated)
        self.state = np.asarray(state)


@dataclass(frozen=True)
class Barrier:
    kind: str
    center: tuple
    radius: float

    def __post_init__(self):
        if self.kind not in (AVOID_DISK, STAY_IN_DISK):
            raise ValueError(f"unknown barrier kind {self.kind!r}")
        if not self.radius > 0:
            raise ValueError("barrier radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != 2:
            raise ValueError("barrier center must be a 2-vector")

    def to_dict(self):
        return {"kind": self.kind, "center": list(self.center), "radius": self.radius}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], tuple(d["center"]), float(d["radius"]))


@dataclass(frozen=True)
class BarrierSet:
    barriers: tuple = ()
    alpha: float = 1.0
    deviation_weights: tuple = field(default=(1.0, 1.0))

    def __post_init__(self):
        object.__setattr__(self, "barriers", tuple(self.barriers))
        object.__setattr__(self, "deviation_weights", tuple(float(w) for w in self.deviation_weights))
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if any(not w > 0 for w in self.deviation_weights):
            raise ValueError("deviation weights must be positive")

    def __len__(self):
        return len(self.barriers)

    def values(self, q):
        return np.array([barrier_value(b, q) for b in self.barriers])


def barrier_value(b: Barrier, q) -> float:
    """Closed-form barrier value; nonnegative inside the safe set."""
    q = np.asarray(q, dtype=float)
    if q.shape[-1] < 2:
        raise ValueError("barrier needs a state with at least two position components")
    d2 = (q[..., 0] - b.center[0]) ** 2 + (q[..., 1] - b.center[1]) ** 2
    r2 = b.radius**2
    return d2 - r2 if b.kind == AVOID_DISK else r2 - d2


def cbf_margin(b: Barrier, alpha: float, q_now, q_next) -> float:
    """``b(q_next) + (alpha - 1) b(q_now)``; nonnegative iff the one-step condition holds."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    return barrier_value(b, q_next) + (alpha - 1.0) * barrier_value(b, q_now)


def _next_positions(model: SystemModel, q, U):
    """Next (x, y) for a batch of controls U (B, m) from a single state."""
    if model.kind == UNICYCLE:
        th = q[2]
        v, w = U[:, 0], U[:, 1]
        small = np.abs(w) < OMEGA_EPS
        r = v / np.where(small, 1.0, w)
        x = np.where(small, q[0] + v * np.cos(th), q[0] + r * (np.sin(th + w) - np.sin(th)))
        y = np.where(small, q[1] + v * np.sin(th), q[1] + r * (np.cos(th) - np.cos(th + w)))
        return x, y
    return q[0] + U[:, 0], q[1] + U[:, 1]


def margins_batch(model: SystemModel, q, U, bs: BarrierSet):
    """CBF margins (B, N) for a batch of candidate controls."""
    q = np.asarray(q, dtype=float)
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if not bs.barriers:
        return np.zeros((len(U), 0))
    x, y = _next_positions(model, q, U)
    cols = []
    for b in bs.barriers:
        d2 = (x - b.center[0]) ** 2 + (y - b.center[1]) ** 2
        nxt = d2 - b.radius**2 if b.kind == AVOID_DISK else b.radius**2 - d2
        cols.append(nxt + (bs.alpha - 1.0) * barrier_value(b, q))
    return np.stack(cols, axis=1)


def _perturbed_starts(u_ref, lo, hi):
    radius = 0.25 * (hi - lo)
    angles = np.arange(8) * np.pi / 4
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    starts = [u_ref]
    for d in dirs:
        starts.append(np.clip(u_ref + radius * d[: len(u_ref)], lo, hi))
    return starts


def _grid_starts(model, q, u_ref, bs, w, n=GRID_STARTS_RESOLUTION, keep=3):
    """Cheapest feasible points of a coarse control grid, mutually well separated."""
    lo, hi = model.bounds.lo, model.bounds.hi
    axes = np.meshgrid(*(np.linspace(lo[i], hi[i], n) for i in range(len(lo))), indexing="ij")
    U = np.stack([a.ravel() for a in axes], axis=1)
    ok = np.all(margins_batch(model, q, U, bs) >= CBF_EPS, axis=1)
    U = U[ok]
    cost = np.sum(w * (U - u_ref) ** 2, axis=1)
    picked = []
    for i in np.argsort(cost, kind="stable"):
        if all(np.max(np.abs(U[i] - p) / (hi - lo)) > 0.15 for p in picked):
            picked.append(U[i])
            if len(picked) == keep:
                break
    return picked


def solve_safe_control(model: SystemModel, q, u_ref, bs: BarrierSet,
                       settings: OptimizerSettings | None = None):
    """Minimal weighted modification of ``u_ref`` satisfying every CBF condition.

    Returns ``u_ref`` unchanged when it already passes; raises
    :class:`InfeasibleSafeControl` when no control in the box does.
    """
    q = np.asarray(q, dtype=float)
    u_ref = np.asarray(u_ref, dtype=float)
    if u_ref.shape != (model.control_dim,):
        raise ValueError(f"control must have shape ({model.control_dim},)")
    if q.shape != (model.state_dim,):
        raise ValueError(f"state must have shape ({model.state_dim},)")
    if not bs.barriers:
        return u_ref.copy()
    if np.all(margins_batch(model, q, u_ref, bs) >= CBF_EPS):
        return u_ref.copy()
    settings = settings or OptimizerSettings()
    w = np.asarray(bs.deviation_weights, dtype=float)
    lo, hi = model.bounds.lo, model.bounds.hi

    def batch(U):
        dev = U - u_ref
        return np.sum(w * dev * dev, axis=1), margins_batch(model, q, U, bs) - CBF_EPS

    problem = NlpProblem(objective=lambda u: batch(u[None])[0][0], lower=lo, upper=hi,
                         batch=batch, n_constraints=len(bs))
    best = None
    # nonconvex (turn left, turn right, slow down, pass either side): always multistart
    for x0 in _perturbed_starts(u_ref, lo, hi) + _grid_starts(model, q, u_ref, bs, w):
        r = minimize(problem, x0, settings)
        if r.feasible and (best is None or r.value < best.value):
            best = r
    if best is None:
        m = margins_batch(model, q, u_ref, bs)[0]
        raise InfeasibleSafeControl(np.flatnonzero(m < CBF_EPS).tolist(), q)
    return best.x


def next_state_safe(model, q, u, bs: BarrierSet) -> bool:
    """True iff every barrier stays nonnegative after applying ``u`` (no disturbance)."""
    q_next = step(model, q, u)
    return bool(np.all(bs.values(q_next) >= 0)) if bs.barriers else True
