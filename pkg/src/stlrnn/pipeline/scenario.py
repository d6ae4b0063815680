"""Scenario configuration: model, formula, regions, barriers and randomization."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from ..optim import OptimizerSettings
from ..safety import AVOID_DISK, Barrier, BarrierSet
from ..stl import Always, CompiledFormula, PredicateTable, horizon, parse_formula
from ..systems import ControlBounds, DisturbanceSpec, SystemModel

BUILTIN = ("case1", "case2")


def _box(bounds):
    return np.asarray(bounds, dtype=float)


@dataclass
class RandomObstacles:
    count: int
    radius: tuple
    region: np.ndarray
    keep_clear_boxes: list
    keep_clear_points: list
    max_tries: int = 10000

    def sample(self, rng, boxes, centers):
        """Non-overlapping avoid-disks, rejected near protected boxes and points."""
        placed = []
        tries = 0
        while len(placed) < self.count:
            tries += 1
            if tries > self.max_tries:
                raise RuntimeError(f"could not place {self.count} obstacles in {self.max_tries} tries")
            r = rng.uniform(*self.radius)
            c = rng.uniform(self.region[:, 0], self.region[:, 1])
            if any(_disk_hits_box(c, r, boxes[name]) for name in self.keep_clear_boxes):
                continue
            if any(np.hypot(*(c - centers[name])) <= r for name in self.keep_clear_points):
                continue
            if any(np.hypot(*(c - np.array(b.center))) <= r + b.radius for b in placed):
                continue
            placed.append(Barrier(AVOID_DISK, tuple(c), float(r)))
        return placed


def _disk_hits_box(c, r, box):
    nearest = np.clip(c, box[:2, 0], box[:2, 1])
    return float(np.hypot(*(c - nearest))) <= r


class Scenario:
    """Parsed scenario; build with :func:`load_scenario` or from a config dict."""

    def __init__(self, config: dict):
        self.config = copy.deepcopy(config)
        cfg = self.config
        self.name = cfg.get("name", "scenario")
        mc = cfg["model"]
        self.model = SystemModel(mc["kind"], ControlBounds(mc["lower"], mc["upper"]))
        self.K = int(cfg["K"])
        self.mode = cfg.get("mode", "full_horizon")
        if self.mode not in ("full_horizon", "mpc"):
            raise ValueError(f"unknown mode {self.mode!r}")
        self.lam = float(cfg.get("lambda", 0.0))
        self.workspace = _box(cfg.get("workspace", [[0, 10], [0, 10]]))

        self.table = PredicateTable()
        self.boxes, self.disks = {}, {}
        for name, rc in cfg.get("regions", {}).items():
            if rc["type"] == "box":
                self.table.add_box(name, rc["bounds"], rc.get("scale", 1.0))
                self.boxes[name] = _box(rc["bounds"])
            elif rc["type"] == "disk":
                self.table.add_disk(name, rc["center"], rc["radius"], rc.get("scale", 1.0))
                self.disks[name] = (np.asarray(rc["center"], float), float(rc["radius"]))
            else:
                raise ValueError(f"region {name!r}: unknown type {rc['type']!r}")
        self.formula_text = cfg["formula"]
        self.formula = parse_formula(self.formula_text, self.table)
        self.compiled = CompiledFormula(self.formula, self.model.state_dim)
        if self.mode == "full_horizon" and self.K < horizon(self.formula):
            raise ValueError(f"K = {self.K} is shorter than the formula horizon {horizon(self.formula)}")
        if self.mode == "mpc":
            if not (isinstance(self.formula, Always) and self.formula.interval.a == 0):
                raise ValueError("mpc mode needs a formula of the form G[0,k1](phi)")
            self.phi = self.formula.arg
            self.k1 = self.formula.interval.b
            self.h_p = int(cfg.get("mpc", {}).get("h_p", 0))
            self.compiled_phi = CompiledFormula(self.phi, self.model.state_dim)
            if self.K != self.k1 + horizon(self.phi):
                raise ValueError(f"mpc mode needs K = k1 + hrz(phi) = {self.k1 + horizon(self.phi)}")

        init = cfg["init"]
        if "region" in init:
            box = self.boxes[init["region"]]
            n = self.model.state_dim
            lo = np.zeros(n)
            hi = np.zeros(n)
            lo[: len(box)], hi[: len(box)] = box[:, 0], box[:, 1]
            extra_lo = init.get("extra_lower", [0.0] * (n - len(box)))
            extra_hi = init.get("extra_upper", [0.0] * (n - len(box)))
            lo[len(box):], hi[len(box):] = extra_lo, extra_hi
        else:
            lo, hi = np.asarray(init["lower"], float), np.asarray(init["upper"], float)
        if lo.shape != (self.model.state_dim,) or np.any(lo > hi):
            raise ValueError("init box must match the state dimension with lower <= upper")
        self.init_lower, self.init_upper = lo, hi

        bc = cfg.get("barriers", {})
        self.alpha = float(bc.get("alpha", 1.0))
        self.deviation_weights = tuple(bc.get("deviation_weights", [1.0] * self.model.control_dim))
        self.fixed_barriers = [Barrier.from_dict(d) for d in bc.get("fixed", [])]
        rnd = bc.get("random")
        self.random_obstacles = None
        if rnd and rnd.get("count", 0) > 0:
            self.random_obstacles = RandomObstacles(
                int(rnd["count"]), tuple(rnd["radius"]), _box(rnd.get("region", self.workspace)),
                list(rnd.get("keep_clear_boxes", [])), list(rnd.get("keep_clear_points", [])),
            )
        BarrierSet((), self.alpha, self.deviation_weights)  # validates alpha and weights

        self.disturbance = DisturbanceSpec(**_dist(cfg.get("disturbance")))
        self.eval_disturbance = DisturbanceSpec(**_dist(cfg.get("eval_disturbance")))
        oc = dict(cfg.get("optimizer", {}))
        oc.pop("seed", None)
        self.optimizer = OptimizerSettings(**oc)

    @property
    def hash(self):
        blob = json.dumps(self.config, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def region_centers(self):
        out = {name: box.mean(axis=1)[:2] for name, box in self.boxes.items()}
        out.update({name: c[:2] for name, (c, _) in self.disks.items()})
        return out

    def sample_initial_state(self, rng):
        return rng.uniform(self.init_lower, self.init_upper)

    def sample_barriers(self, rng, extra=True):
        """Fixed barriers plus (if configured and ``extra``) freshly placed random disks."""
        barriers = list(self.fixed_barriers)
        if extra and self.random_obstacles is not None:
            barriers += self.random_obstacles.sample(rng, self.boxes, self.region_centers())
        return BarrierSet(tuple(barriers), self.alpha, self.deviation_weights)

    def barrier_set(self, barriers):
        return BarrierSet(tuple(barriers), self.alpha, self.deviation_weights)

    def to_yaml(self):
        return yaml.safe_dump(self.config, sort_keys=False)


def _dist(d):
    d = dict(d or {"kind": "none"})
    d.pop("seed", None)
    return d


def load_scenario(spec) -> Scenario:
    """Load a scenario from a builtin name (``case1``/``case2``), a YAML/JSON path or a dict."""
    if isinstance(spec, Scenario):
        return spec
    if isinstance(spec, dict):
        return Scenario(spec)
    if str(spec) in BUILTIN:
        text = resources.files("stlrnn.pipeline").joinpath(f"scenarios/{spec}.yaml").read_text()
        return Scenario(yaml.safe_load(text))
    path = Path(spec)
    text = path.read_text()
    cfg = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    return Scenario(cfg)
