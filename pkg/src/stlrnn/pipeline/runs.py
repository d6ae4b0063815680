"""Closed-loop runs: the direct (optimize + filter) solution and the RNN + CBF controller."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..learn import DatasetRecord, LstmParams, rnn_forward
from ..optim import (
    MpcProblem,
    OptimizerSettings,
    ReferenceProblem,
    shift_warm_start,
    solve_reference_control,
    solve_reference_control_mpc,
)
from ..safety import InfeasibleSafeControl, solve_safe_control
from ..stl import Trace
from ..systems import DisturbanceSpec, step
from .scenario import Scenario

OK = "ok"
CBF_INFEASIBLE = "cbf_infeasible"
REFERENCE_INFEASIBLE = "reference_infeasible"


@dataclass
class RunResult:
    seed: int
    trajectory: np.ndarray
    applied_controls: np.ndarray
    reference_controls: np.ndarray
    robustness: float
    satisfied: bool
    safe: bool
    status: str
    barriers: list
    step_times: list = field(default_factory=list)

    @property
    def completed(self):
        return self.status == OK

    @property
    def success(self):
        return self.completed and self.safe and self.satisfied

    def to_record(self, scenario_hash="") -> DatasetRecord:
        return DatasetRecord(self.trajectory, self.reference_controls, self.robustness,
                             {"seed": self.seed, "barriers": [b.to_dict() for b in self.barriers],
                              "scenario_hash": scenario_hash})


class RunStreams:
    """Independent random streams of one run, all derived from its seed."""

    def __init__(self, seed):
        init, barriers, dist, opt = np.random.SeedSequence(int(seed)).spawn(4)
        self.init = np.random.default_rng(init)
        self.barriers = np.random.default_rng(barriers)
        self.disturbance_seed = int(dist.generate_state(1)[0])
        self.optimizer_seed = int(opt.generate_state(1)[0])


def setup_run(sc: Scenario, seed, extra_obstacles=True):
    """Initial state and barrier set for ``seed`` (shared by direct and RNN runs)."""
    streams = RunStreams(seed)
    q0 = sc.sample_initial_state(streams.init)
    bs = sc.sample_barriers(streams.barriers, extra=extra_obstacles)
    return streams, q0, bs


def _noise(spec: DisturbanceSpec, seed, n):
    return DisturbanceSpec(spec.kind, spec.half_width, seed).sampler(n)


def _finish(sc, seed, states, applied, refs, bs, status, times):
    traj = np.array(states)
    safe = bool(np.all([np.all(bs.values(q) >= 0) for q in traj])) if len(bs) else True
    if status == OK:
        rob = sc.compiled.robustness(traj, 0)
    else:
        rob = math.nan
    m = sc.model.control_dim
    return RunResult(seed, traj, np.array(applied).reshape(-1, m), np.array(refs).reshape(-1, m),
                     float(rob), bool(status == OK and rob > 0), safe, status, list(bs.barriers), times)


def reference_step(sc: Scenario, states, k, settings: OptimizerSettings, warm=None):
    """Solve the reference problem at time ``k`` given states q_0..q_k."""
    q = states[-1]
    if sc.mode == "full_horizon":
        hist = Trace(np.array(states[:-1]), 0) if k > 0 else None
        rp = ReferenceProblem(sc.model, sc.compiled, q, k, sc.K, sc.lam, hist)
        if warm is not None:
            warm = shift_warm_start(warm, sc.K - k)
        return solve_reference_control(rp, settings, warm)
    w = min(k, sc.compiled_phi.horizon - 1)
    hist = Trace(np.array(states[k - w:k]), 0) if w > 0 else None
    mp = MpcProblem(sc.model, sc.compiled_phi, sc.k1, sc.h_p, q, k, sc.lam, hist)
    if warm is not None:
        warm = shift_warm_start(warm, mp.H)
    return solve_reference_control_mpc(mp, settings, warm)


def direct_solve_trajectory(sc: Scenario, seed: int, extra_obstacles=True) -> RunResult:
    """Re-solve the reference problem every step, filter its first control, apply it."""
    streams, q, bs = setup_run(sc, seed, extra_obstacles)
    noise = _noise(sc.disturbance, streams.disturbance_seed, sc.model.state_dim)
    states, applied, refs, times = [q], [], [], []
    warm = None
    status = OK
    for k in range(sc.K):
        settings = OptimizerSettings(sc.optimizer.max_iters, sc.optimizer.grad_step, sc.optimizer.tol,
                                     sc.optimizer.restarts, streams.optimizer_seed + k)
        t0 = time.perf_counter()
        sol = reference_step(sc, states, k, settings, warm)
        times.append(time.perf_counter() - t0)
        if not sol.feasible:
            status = REFERENCE_INFEASIBLE
            break
        u_ref = sol.controls[0]
        try:
            u = solve_safe_control(sc.model, q, u_ref, bs)
        except InfeasibleSafeControl:
            status = CBF_INFEASIBLE
            break
        refs.append(u_ref)
        applied.append(u)
        q = step(sc.model, q, u) + noise()
        states.append(q)
        warm = sol.controls
    return _finish(sc, seed, states, applied, refs, bs, status, times)


def run_rnn_controller(params: LstmParams, sc: Scenario, seed: int, extra_obstacles=True,
                       filter_controls=True) -> RunResult:
    """Feedback loop: network proposes a control, the CBF filter makes it safe.

    ``filter_controls=False`` bypasses the filter (used to show the safety
    assertion is live); such runs must never be used for evaluation.
    """
    if params.input_dim != sc.model.state_dim or params.output_dim != sc.model.control_dim:
        raise ValueError("network dimensions do not match the scenario model")
    streams, q, bs = setup_run(sc, seed, extra_obstacles)
    noise = _noise(sc.eval_disturbance, streams.disturbance_seed, sc.model.state_dim)
    states, applied, refs, times = [q], [], [], []
    h = None
    status = OK
    for _ in range(sc.K):
        t0 = time.perf_counter()
        u_ref, h = rnn_forward(params, q, h)
        times.append(time.perf_counter() - t0)
        if filter_controls:
            try:
                u = solve_safe_control(sc.model, q, u_ref, bs)
            except InfeasibleSafeControl:
                status = CBF_INFEASIBLE
                break
        else:
            u = u_ref
        refs.append(u_ref)
        applied.append(u)
        q = step(sc.model, q, u) + noise()
        states.append(q)
    return _finish(sc, seed, states, applied, refs, bs, status, times)


def window_robustness(sc: Scenario, trajectory):
    """Robustness of the inner formula on every window j = 0..k1 (mpc scenarios)."""
    if sc.mode != "mpc":
        raise ValueError("window checks apply to G[0,k1](phi) scenarios")
    traj = np.asarray(trajectory)
    return [sc.compiled_phi.robustness(traj, j) for j in range(sc.k1 + 1)]
