"""Flattened formula programs and the batched robustness kernels.

A formula tree is lowered to post-ordered node arrays. Every node carries the
range of relative times at which its value is needed, so evaluation is a
single bottom-up sweep that fills one scratch buffer. The same program is run
by a numba loop kernel or by a vectorized numpy path (see ``stlrnn._accel``).
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .. import _accel
from .formula import DISK, Always, And, Atom, Eventually, Not, Or, TrueF, horizon

OP_TRUE, OP_PRED, OP_NOT, OP_AND, OP_OR, OP_EVENTUALLY, OP_ALWAYS = range(7)
PRED_HALFPLANE, PRED_DISK = 0, 1
SEM_AGM, SEM_TRADITIONAL = 0, 1
_SEMANTICS = {"agm": SEM_AGM, "traditional": SEM_TRADITIONAL}


class CompiledFormula:
    """Formula lowered to flat arrays; evaluate with :meth:`robustness`."""

    def __init__(self, formula, dim):
        self.formula = formula
        self.dim = int(dim)
        self.horizon = horizon(formula)
        nodes = []
        self._lower(formula, 0, 0, nodes)
        n = len(nodes)
        self.size = n
        self.ops = np.array([d["op"] for d in nodes], dtype=np.int64)
        self.lo = np.array([d["lo"] for d in nodes], dtype=np.int64)
        self.hi = np.array([d["hi"] for d in nodes], dtype=np.int64)
        self.ia = np.array([d.get("a", 0) for d in nodes], dtype=np.int64)
        self.ib = np.array([d.get("b", 0) for d in nodes], dtype=np.int64)
        children, cstart, ccount = [], [], []
        for d in nodes:
            cstart.append(len(children))
            ccount.append(len(d.get("children", ())))
            children.extend(d.get("children", ()))
        self.children = np.array(children or [0], dtype=np.int64)
        self.cstart = np.array(cstart, dtype=np.int64)
        self.ccount = np.array(ccount, dtype=np.int64)
        widths = self.hi - self.lo + 1
        self.voff = np.concatenate([[0], np.cumsum(widths)[:-1]]).astype(np.int64)
        self.nvals = int(widths.sum())
        params, pkind, poff, pdim, pscale = [], [], [], [], []
        for d in nodes:
            p = d.get("pred")
            poff.append(len(params))
            if p is None:
                pkind.append(0)
                pdim.append(0)
                pscale.append(1.0)
                continue
            if p.dim > self.dim:
                raise ValueError(f"predicate {p.name!r} needs dimension {p.dim}, trace has {self.dim}")
            pdim.append(p.dim)
            pscale.append(p.scale)
            if p.kind == DISK:
                pkind.append(PRED_DISK)
                params.extend(p.center)
                params.append(p.radius)
            else:
                pkind.append(PRED_HALFPLANE)
                params.extend(p.coeffs)
                params.append(p.offset)
        self.pkind = np.array(pkind, dtype=np.int64)
        self.poff = np.array(poff, dtype=np.int64)
        self.pdim = np.array(pdim, dtype=np.int64)
        self.pscale = np.array(pscale, dtype=np.float64)
        self.params = np.array(params or [0.0], dtype=np.float64)
        self._nodes = nodes

    def _lower(self, f, lo, hi, nodes):
        if isinstance(f, TrueF):
            node = {"op": OP_TRUE}
        elif isinstance(f, Atom):
            node = {"op": OP_PRED, "pred": f.pred}
        elif isinstance(f, Not):
            node = {"op": OP_NOT, "children": [self._lower(f.arg, lo, hi, nodes)]}
        elif isinstance(f, (And, Or)):
            kids = [self._lower(g, lo, hi, nodes) for g in f.args]
            node = {"op": OP_AND if isinstance(f, And) else OP_OR, "children": kids}
        elif isinstance(f, (Eventually, Always)):
            a, b = f.interval.a, f.interval.b
            kid = self._lower(f.arg, lo + a, hi + b, nodes)
            node = {"op": OP_EVENTUALLY if isinstance(f, Eventually) else OP_ALWAYS,
                    "a": a, "b": b, "children": [kid]}
        else:
            raise TypeError(f"not a formula node: {f!r}")
        node["lo"], node["hi"] = lo, hi
        nodes.append(node)
        return len(nodes) - 1

    def robustness(self, traces, t0=0, semantics="agm", backend=None):
        """Robustness at row ``t0`` of each trace.

        ``traces`` has shape (T, n) or (B, T, n); returns a float or a (B,) array.
        """
        arr = np.ascontiguousarray(traces, dtype=np.float64)
        single = arr.ndim == 2
        if single:
            arr = arr[None]
        if arr.ndim != 3 or arr.shape[2] < self.dim:
            raise ValueError(f"expected traces of shape (B, T, >= {self.dim}), got {np.shape(traces)}")
        if t0 < 0 or t0 + self.horizon >= arr.shape[1]:
            raise ValueError(f"trace of length {arr.shape[1]} cannot be evaluated at row {t0} "
                             f"(horizon {self.horizon})")
        sem = _SEMANTICS[semantics]
        use_numba = _accel.USE_NUMBA if backend is None else backend == "numba"
        if use_numba:
            out = _robustness_batch_numba(
                self.ops, self.lo, self.hi, self.ia, self.ib, self.cstart, self.ccount, self.children,
                self.voff, self.nvals, self.pkind, self.poff, self.pdim, self.pscale, self.params,
                sem, arr, int(t0))
        else:
            out = _robustness_batch_numpy(self, sem, arr, int(t0))
        return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# numba kernels


@_accel.njit
def _reduce_and(vals, start, count, stride, sem):
    if sem == SEM_TRADITIONAL:
        r = math.inf
        for i in range(count):
            v = vals[start + i * stride]
            if v < r:
                r = v
        return r
    allpos = True
    for i in range(count):
        if vals[start + i * stride] <= 0.0:
            allpos = False
            break
    acc = 0.0
    if allpos:
        for i in range(count):
            acc += math.log1p(vals[start + i * stride])
        return math.expm1(acc / count)
    for i in range(count):
        v = vals[start + i * stride]
        if v <= 0.0:
            acc += v
    return acc / count


@_accel.njit
def _reduce_or(vals, start, count, stride, sem):
    if sem == SEM_TRADITIONAL:
        r = -math.inf
        for i in range(count):
            v = vals[start + i * stride]
            if v > r:
                r = v
        return r
    allneg = True
    for i in range(count):
        if vals[start + i * stride] > 0.0:
            allneg = False
            break
    acc = 0.0
    if allneg:
        for i in range(count):
            acc += math.log1p(-vals[start + i * stride])
        return -math.expm1(acc / count)
    for i in range(count):
        v = vals[start + i * stride]
        if v > 0.0:
            acc += v
    return acc / count


@_accel.njit
def _robustness_batch_numba(ops, lo, hi, ia, ib, cstart, ccount, children, voff, nvals,
                            pkind, poff, pdim, pscale, params, sem, traces, t0):
    nb = traces.shape[0]
    nn = ops.shape[0]
    out = np.empty(nb)
    vals = np.empty(nvals)
    gather = np.empty(max(ccount.max(), 1))
    for bi in range(nb):
        for n in range(nn):
            op = ops[n]
            width = hi[n] - lo[n] + 1
            base = voff[n]
            if op == OP_TRUE:
                for t in range(width):
                    vals[base + t] = 1.0 if sem == SEM_AGM else math.inf
            elif op == OP_PRED:
                off = poff[n]
                d = pdim[n]
                for t in range(width):
                    s = traces[bi, t0 + lo[n] + t]
                    if pkind[n] == PRED_HALFPLANE:
                        v = params[off + d]
                        for j in range(d):
                            v += params[off + j] * s[j]
                    else:
                        r = params[off + d]
                        v = r * r
                        for j in range(d):
                            diff = s[j] - params[off + j]
                            v -= diff * diff
                    if sem == SEM_AGM:
                        v = v / pscale[n]
                        if v > 1.0:
                            v = 1.0
                        elif v < -1.0:
                            v = -1.0
                    vals[base + t] = v
            elif op == OP_NOT:
                c = children[cstart[n]]
                cb = voff[c] + lo[n] - lo[c]
                for t in range(width):
                    vals[base + t] = -vals[cb + t]
            elif op == OP_AND or op == OP_OR:
                m = ccount[n]
                for t in range(width):
                    for i in range(m):
                        c = children[cstart[n] + i]
                        gather[i] = vals[voff[c] + lo[n] + t - lo[c]]
                    if op == OP_AND:
                        vals[base + t] = _reduce_and(gather, 0, m, 1, sem)
                    else:
                        vals[base + t] = _reduce_or(gather, 0, m, 1, sem)
            else:
                c = children[cstart[n]]
                w = ib[n] - ia[n] + 1
                for t in range(width):
                    start = voff[c] + lo[n] + t + ia[n] - lo[c]
                    if op == OP_ALWAYS:
                        vals[base + t] = _reduce_and(vals, start, w, 1, sem)
                    else:
                        vals[base + t] = _reduce_or(vals, start, w, 1, sem)
        out[bi] = vals[voff[nn - 1]]
    return out


# ---------------------------------------------------------------------------
# numpy fallback


def _np_and(v, axis, sem):
    if sem == SEM_TRADITIONAL:
        return v.min(axis=axis)
    pos = v > 0
    allpos = pos.all(axis=axis)
    geo = np.expm1(np.mean(np.log1p(np.where(pos, v, 0.0)), axis=axis))
    neg = np.sum(np.where(pos, 0.0, v), axis=axis) / v.shape[axis]
    return np.where(allpos, geo, neg)


def _np_or(v, axis, sem):
    if sem == SEM_TRADITIONAL:
        return v.max(axis=axis)
    nonpos = v <= 0
    allneg = nonpos.all(axis=axis)
    geo = -np.expm1(np.mean(np.log1p(-np.where(nonpos, v, 0.0)), axis=axis))
    pos = np.sum(np.where(nonpos, 0.0, v), axis=axis) / v.shape[axis]
    return np.where(allneg, geo, pos)


def _robustness_batch_numpy(prog, sem, traces, t0):
    nb = traces.shape[0]
    vals = [None] * prog.size
    for n, node in enumerate(prog._nodes):
        op = node["op"]
        lo, hi = node["lo"], node["hi"]
        width = hi - lo + 1
        if op == OP_TRUE:
            v = np.full((nb, width), 1.0 if sem == SEM_AGM else math.inf)
        elif op == OP_PRED:
            p = node["pred"]
            v = p.value(traces[:, t0 + lo:t0 + hi + 1, :])
            if sem == SEM_AGM:
                v = np.clip(v / p.scale, -1.0, 1.0)
        elif op == OP_NOT:
            c = node["children"][0]
            v = -_slice(vals[c], prog._nodes[c], lo, width)
        elif op in (OP_AND, OP_OR):
            stack = np.stack([_slice(vals[c], prog._nodes[c], lo, width) for c in node["children"]], axis=1)
            v = _np_and(stack, 1, sem) if op == OP_AND else _np_or(stack, 1, sem)
        else:
            c = node["children"][0]
            w = node["b"] - node["a"] + 1
            child = vals[c]
            start = lo + node["a"] - prog._nodes[c]["lo"]
            windows = sliding_window_view(child, w, axis=1)[:, start:start + width, :]
            v = _np_and(windows, 2, sem) if op == OP_ALWAYS else _np_or(windows, 2, sem)
        vals[n] = v
    return vals[-1][:, 0]


def _slice(child_vals, child_node, lo, width):
    start = lo - child_node["lo"]
    return child_vals[:, start:start + width]
