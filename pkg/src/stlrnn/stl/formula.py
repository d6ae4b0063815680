"""STL abstract syntax: intervals, predicates, formula nodes and traces."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence, Union

import numpy as np


@dataclass(frozen=True)
class Interval:
    a: int
    b: int

    def __post_init__(self):
        if int(self.a) != self.a or int(self.b) != self.b:
            raise ValueError(f"interval bounds must be integers, got [{self.a},{self.b}]")
        if self.a < 0 or self.a > self.b:
            raise ValueError(f"malformed interval [{self.a},{self.b}]: need 0 <= a <= b")


HALFPLANE = "halfplane"
DISK = "disk"


@dataclass(frozen=True)
class Predicate:
    """Atomic predicate ``l(s) >= 0`` from a closed catalog.

    ``halfplane``: l(s) = c . s + d, with ``coeffs`` = c and ``offset`` = d.
    ``disk``: l(s) = r^2 - |s[:len(p)] - p|^2, with ``center`` = p and ``radius`` = r.
    """

    name: str
    kind: str
    scale: float = 1.0
    coeffs: tuple = ()
    offset: float = 0.0
    center: tuple = ()
    radius: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"predicate {self.name!r}: scale must be positive")
        if self.kind == HALFPLANE:
            if not self.coeffs:
                raise ValueError(f"predicate {self.name!r}: halfplane needs coefficients")
        elif self.kind == DISK:
            if not self.center or not self.radius > 0:
                raise ValueError(f"predicate {self.name!r}: disk needs a center and radius > 0")
        else:
            raise ValueError(f"predicate {self.name!r}: unknown kind {self.kind!r}")

    @classmethod
    def halfplane(cls, name, coeffs, offset, scale=1.0):
        return cls(name, HALFPLANE, float(scale), coeffs=tuple(float(c) for c in coeffs), offset=float(offset))

    @classmethod
    def disk(cls, name, center, radius, scale=1.0):
        return cls(name, DISK, float(scale), center=tuple(float(c) for c in center), radius=float(radius))

    @property
    def dim(self):
        return len(self.coeffs) if self.kind == HALFPLANE else len(self.center)

    def value(self, s):
        s = np.asarray(s, dtype=float)
        if s.shape[-1] < self.dim:
            raise ValueError(f"predicate {self.name!r} needs state dimension >= {self.dim}, got {s.shape[-1]}")
        if self.kind == HALFPLANE:
            return s[..., : self.dim] @ np.asarray(self.coeffs) + self.offset
        diff = s[..., : self.dim] - np.asarray(self.center)
        return self.radius**2 - np.sum(diff * diff, axis=-1)


@dataclass(frozen=True)
class TrueF:
    pass


@dataclass(frozen=True)
class Atom:
    pred: Predicate


@dataclass(frozen=True)
class Not:
    arg: "Formula"


@dataclass(frozen=True)
class And:
    args: tuple

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if len(self.args) < 2:
            raise ValueError("And needs at least two operands")


@dataclass(frozen=True)
class Or:
    args: tuple

    def __post_init__(self):
        object.__setattr__(self, "args", tuple(self.args))
        if len(self.args) < 2:
            raise ValueError("Or needs at least two operands")


@dataclass(frozen=True)
class Eventually:
    interval: Interval
    arg: "Formula"


@dataclass(frozen=True)
class Always:
    interval: Interval
    arg: "Formula"


Formula = Union[TrueF, Atom, Not, And, Or, Eventually, Always]


def horizon(f: Formula) -> int:
    """Number of future samples needed to decide ``f`` at the current time."""
    if isinstance(f, (TrueF, Atom)):
        return 0
    if isinstance(f, Not):
        return horizon(f.arg)
    if isinstance(f, (And, Or)):
        return max(horizon(g) for g in f.args)
    if isinstance(f, (Eventually, Always)):
        return f.interval.b + horizon(f.arg)
    raise TypeError(f"not a formula node: {f!r}")


def depth(f: Formula) -> int:
    if isinstance(f, (TrueF, Atom)):
        return 0
    if isinstance(f, (And, Or)):
        return 1 + max(depth(g) for g in f.args)
    return 1 + depth(f.arg)


def atoms(f: Formula):
    """Yield every predicate in ``f`` (with repetition), left to right."""
    if isinstance(f, Atom):
        yield f.pred
    elif isinstance(f, (And, Or)):
        for g in f.args:
            yield from atoms(g)
    elif isinstance(f, (Not, Eventually, Always)):
        yield from atoms(f.arg)


def to_text(f: Formula) -> str:
    """Render ``f`` in the concrete grammar accepted by ``parse_formula``."""
    if isinstance(f, TrueF):
        return "T"
    if isinstance(f, Atom):
        return f.pred.name
    if isinstance(f, Not):
        return "!" + _operand(f.arg)
    if isinstance(f, And):
        return " & ".join(_operand(g) for g in f.args)
    if isinstance(f, Or):
        return " | ".join(_operand(g) for g in f.args)
    op = "F" if isinstance(f, Eventually) else "G"
    return f"{op}[{f.interval.a},{f.interval.b}]{_operand(f.arg)}"


def _operand(f):
    text = to_text(f)
    return f"({text})" if isinstance(f, (And, Or)) else text


class Trace:
    """Finite sequence of state vectors; ``start_index`` is the absolute time of row 0."""

    __slots__ = ("states", "start_index")

    def __init__(self, states, start_index: int = 0):
        arr = np.array(states, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ValueError(f"trace needs shape (length >= 1, n), got {arr.shape}")
        if start_index < 0:
            raise ValueError("start_index must be nonnegative")
        arr.setflags(write=False)
        self.states = arr
        self.start_index = int(start_index)

    def __len__(self):
        return self.states.shape[0]

    @property
    def dim(self):
        return self.states.shape[1]

    @property
    def end_index(self):
        """Absolute time one past the last sample."""
        return self.start_index + len(self)

    def __repr__(self):
        return f"Trace(len={len(self)}, dim={self.dim}, start_index={self.start_index})"


class RobustnessValue(NamedTuple):
    value: float
    semantics: str

    def __float__(self):
        return self.value


@dataclass
class PredicateTable:
    """Name -> formula fragment used when resolving identifiers in formula text.

    Boxes register under their own name (as a conjunction of four halfplanes)
    and under ``<name>_0`` .. ``<name>_3`` so printed formulas parse back.
    """

    entries: dict = field(default_factory=dict)

    def add_predicate(self, pred: Predicate):
        self.entries[pred.name] = Atom(pred)
        return self

    def add_box(self, name, bounds: Sequence[Sequence[float]], scale=1.0):
        """Axis-aligned box ``bounds[i] = (lo_i, hi_i)`` over the first len(bounds) components."""
        n = len(bounds)
        parts = []
        for i, (lo, hi) in enumerate(bounds):
            if not lo < hi:
                raise ValueError(f"box {name!r}: empty extent on axis {i}")
            e = [0.0] * n
            e[i] = 1.0
            parts.append(Predicate.halfplane(f"{name}_{2 * i}", e, -lo, scale))
            e = [0.0] * n
            e[i] = -1.0
            parts.append(Predicate.halfplane(f"{name}_{2 * i + 1}", e, hi, scale))
        for p in parts:
            self.add_predicate(p)
        self.entries[name] = And(tuple(Atom(p) for p in parts))
        return self

    def add_disk(self, name, center, radius, scale=1.0):
        return self.add_predicate(Predicate.disk(name, center, radius, scale))

    def __contains__(self, name):
        return name in self.entries

    def __getitem__(self, name):
        return self.entries[name]
