"""Discrete-time models: unicycle and single integrator, plus rollouts."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .stl.formula import Trace

UNICYCLE = "unicycle"
INTEGRATOR = "integrator"
_DIMS = {UNICYCLE: (3, 2), INTEGRATOR: (2, 2)}
_KIND_CODE = {UNICYCLE: 0, INTEGRATOR: 1}

# below this |omega| the unicycle uses its straight-line limit
OMEGA_EPS = 1e-6


@dataclass(frozen=True)
class ControlBounds:
    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lower)
        hi = tuple(float(x) for x in self.upper)
        if len(lo) != len(hi) or not lo:
            raise ValueError("control bounds need matching, non-empty lower/upper vectors")
        if not all(math.isfinite(a) and math.isfinite(b) and a < b for a, b in zip(lo, hi)):
            raise ValueError(f"control bounds must be finite with lower < upper: {lo} vs {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def lo(self):
        return np.array(self.lower)

    @property
    def hi(self):
        return np.array(self.upper)

    @property
    def dim(self):
        return len(self.lower)

    @property
    def midpoint(self):
        return 0.5 * (self.lo + self.hi)

    def contains(self, u, tol=1e-12):
        u = np.asarray(u, dtype=float)
        return bool(np.all(u >= self.lo - tol) and np.all(u <= self.hi + tol))

    def clip(self, u):
        return np.clip(u, self.lo, self.hi)


@dataclass(frozen=True)
class SystemModel:
    kind: str
    bounds: ControlBounds

    def __post_init__(self):
        if self.kind not in _DIMS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.bounds.dim != self.control_dim:
            raise ValueError(f"{self.kind} needs {self.control_dim}-dimensional control bounds")

    @property
    def state_dim(self):
        return _DIMS[self.kind][0]

    @property
    def control_dim(self):
        return _DIMS[self.kind][1]

    @property
    def code(self):
        return _KIND_CODE[self.kind]

    @classmethod
    def unicycle(cls, v=(0.0, 1.0), omega=(-0.5, 0.5)):
        return cls(UNICYCLE, ControlBounds((v[0], omega[0]), (v[1], omega[1])))

    @classmethod
    def integrator(cls, lower=(-0.6, -0.6), upper=(0.6, 0.6)):
        return cls(INTEGRATOR, ControlBounds(lower, upper))


@dataclass(frozen=True)
class DisturbanceSpec:
    kind: str = "none"
    half_width: tuple = field(default=())
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("none", "uniform_box"):
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        hw = tuple(float(x) for x in self.half_width)
        if any(not x >= 0 for x in hw):
            raise ValueError("disturbance half widths must be nonnegative")
        if self.kind == "uniform_box" and not hw:
            raise ValueError("uniform_box disturbance needs half_width")
        object.__setattr__(self, "half_width", hw)

    def sampler(self, n):
        """Return a callable producing successive disturbance vectors."""
        if self.kind == "none":
            zero = np.zeros(n)
            return lambda: zero
        hw = np.broadcast_to(np.asarray(self.half_width), (n,)).copy()
        rng = np.random.default_rng(self.seed)
        return lambda: rng.uniform(-hw, hw)


def _check_dims(model, q, u):
    q = np.asarray(q, dtype=float)
    u = np.asarray(u, dtype=float)
    if q.shape != (model.state_dim,):
        raise ValueError(f"{model.kind}: state must have shape ({model.state_dim},), got {q.shape}")
    if u.shape != (model.control_dim,):
        raise ValueError(f"{model.kind}: control must have shape ({model.control_dim},), got {u.shape}")
    return q, u


def unicycle_step(q, u):
    x, y, th = q
    v, w = u
    if abs(w) < OMEGA_EPS:
        return np.array([x + v * math.cos(th), y + v * math.sin(th), th + w])
    r = v / w
    return np.array([x + r * (math.sin(th + w) - math.sin(th)),
                     y + r * (math.cos(th) - math.cos(th + w)),
                     th + w])


def step(model: SystemModel, q, u):
    """One application of the model map; does not clamp ``u``."""
    q, u = _check_dims(model, q, u)
    if model.kind == UNICYCLE:
        return unicycle_step(q, u)
    return q + u


def rollout(model: SystemModel, q0, controls, dist: DisturbanceSpec | None = None) -> Trace:
    """Apply ``controls`` from ``q0``; returns the trace of len(controls) + 1 states."""
    q = np.asarray(q0, dtype=float)
    controls = np.asarray(controls, dtype=float).reshape(-1, model.control_dim) if len(controls) else \
        np.zeros((0, model.control_dim))
    if q.shape != (model.state_dim,):
        raise ValueError(f"{model.kind}: state must have shape ({model.state_dim},), got {q.shape}")
    for j, u in enumerate(controls):
        if not model.bounds.contains(u):
            raise ValueError(f"control {j} = {u.tolist()} outside bounds "
                             f"[{model.bounds.lower}, {model.bounds.upper}]")
    noise = (dist or DisturbanceSpec()).sampler(model.state_dim)
    states = [q]
    for u in controls:
        q = step(model, q, u) + noise()
        states.append(q)
    return Trace(np.array(states), 0)


def rollout_batch(model: SystemModel, q0, controls, backend=None):
    """Nominal rollouts for a batch of control sequences.

    ``controls`` has shape (B, L, m); returns states of shape (B, L + 1, n).
    This is the optimizer's inner loop: no bounds checks, no disturbance.
    """
    q0 = np.ascontiguousarray(q0, dtype=np.float64)
    u = np.ascontiguousarray(controls, dtype=np.float64)
    use_numba = _accel.USE_NUMBA if backend is None else backend == "numba"
    if use_numba:
        return _rollout_batch_numba(model.code, q0, u)
    return _rollout_batch_numpy(model.code, q0, u)


@_accel.njit
def _rollout_batch_numba(code, q0, u):
    nb, nl, _ = u.shape
    n = q0.shape[0]
    out = np.empty((nb, nl + 1, n))
    for b in range(nb):
        for i in range(n):
            out[b, 0, i] = q0[i]
        for t in range(nl):
            if code == 0:
                x = out[b, t, 0]
                y = out[b, t, 1]
                th = out[b, t, 2]
                v = u[b, t, 0]
                w = u[b, t, 1]
                if abs(w) < OMEGA_EPS:
                    out[b, t + 1, 0] = x + v * math.cos(th)
                    out[b, t + 1, 1] = y + v * math.sin(th)
                else:
                    r = v / w
                    out[b, t + 1, 0] = x + r * (math.sin(th + w) - math.sin(th))
                    out[b, t + 1, 1] = y + r * (math.cos(th) - math.cos(th + w))
                out[b, t + 1, 2] = th + w
            else:
                for i in range(n):
                    out[b, t + 1, i] = out[b, t, i] + u[b, t, i]
    return out


def _rollout_batch_numpy(code, q0, u):
    nb, nl, _ = u.shape
    if code == 1:
        steps = np.concatenate([np.zeros((nb, 1, q0.shape[0])), u], axis=1)
        return q0 + np.cumsum(steps, axis=1)
    out = np.empty((nb, nl + 1, 3))
    out[:, 0] = q0
    for t in range(nl):
        x, y, th = out[:, t, 0], out[:, t, 1], out[:, t, 2]
        v, w = u[:, t, 0], u[:, t, 1]
        small = np.abs(w) < OMEGA_EPS
        safe_w = np.where(small, 1.0, w)
        r = v / safe_w
        out[:, t + 1, 0] = np.where(small, x + v * np.cos(th), x + r * (np.sin(th + w) - np.sin(th)))
        out[:, t + 1, 1] = np.where(small, y + v * np.sin(th), y + r * (np.cos(th) - np.cos(th + w)))
        out[:, t + 1, 2] = th + w
    return out
