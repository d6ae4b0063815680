"""Stacked LSTM feedback controller trained by imitation (BPTT + Adam), in numpy.

The network maps the current (normalized) state and its recurrent memory to a
control: linear read-out of the top hidden state, ``tanh`` squashing, then an
affine map onto the control box.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from .stl.formula import Trace
from .systems import ControlBounds

FORMAT_VERSION = 1
# keeps tanh output strictly inside (-1, 1) even when it saturates in float64
_SHRINK = 1.0 - 1e-9


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class LstmParams:
    input_dim: int
    output_dim: int
    hidden_size: int
    W: List[np.ndarray]  # per layer, (4H, in + H); gate rows ordered i, f, g, o
    b: List[np.ndarray]  # per layer, (4H,)
    W_out: np.ndarray  # (m, H)
    b_out: np.ndarray  # (m,)
    in_mean: np.ndarray
    in_scale: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    @property
    def layers(self):
        return len(self.W)

    @classmethod
    def init(cls, input_dim, output_dim, bounds: ControlBounds, hidden_size=64, layers=2, seed=0,
             in_mean=None, in_scale=None):
        """Uniform(+-1/sqrt(fan_in)) initialization, deterministic in ``seed``."""
        rng = np.random.default_rng(seed)
        W, b = [], []
        for layer in range(layers):
            fan_in = (input_dim if layer == 0 else hidden_size) + hidden_size
            k = 1.0 / np.sqrt(fan_in)
            W.append(rng.uniform(-k, k, (4 * hidden_size, fan_in)))
            b.append(rng.uniform(-k, k, 4 * hidden_size))
        k = 1.0 / np.sqrt(hidden_size)
        return cls(
            input_dim, output_dim, hidden_size, W, b,
            rng.uniform(-k, k, (output_dim, hidden_size)), rng.uniform(-k, k, output_dim),
            np.zeros(input_dim) if in_mean is None else np.asarray(in_mean, float),
            np.ones(input_dim) if in_scale is None else np.asarray(in_scale, float),
            bounds.lo.copy(), bounds.hi.copy(),
        )

    @classmethod
    def zeros(cls, input_dim, output_dim, bounds: ControlBounds, hidden_size=64, layers=2):
        p = cls.init(input_dim, output_dim, bounds, hidden_size, layers)
        for arr in p.arrays().values():
            arr[...] = 0.0
        return p

    def arrays(self):
        """Trainable arrays by name (views, not copies)."""
        out = {}
        for i, (w, b) in enumerate(zip(self.W, self.b)):
            out[f"W{i}"] = w
            out[f"b{i}"] = b
        out["W_out"] = self.W_out
        out["b_out"] = self.b_out
        return out

    def copy(self):
        return LstmParams(
            self.input_dim, self.output_dim, self.hidden_size,
            [w.copy() for w in self.W], [b.copy() for b in self.b],
            self.W_out.copy(), self.b_out.copy(), self.in_mean.copy(), self.in_scale.copy(),
            self.lower.copy(), self.upper.copy(),
        )

    def normalize(self, q):
        return (np.asarray(q, dtype=float) - self.in_mean) / self.in_scale


class HiddenState(NamedTuple):
    h: tuple
    c: tuple

    @classmethod
    def zeros(cls, p: LstmParams, batch=None):
        shape = (p.hidden_size,) if batch is None else (batch, p.hidden_size)
        return cls(tuple(np.zeros(shape) for _ in range(p.layers)),
                   tuple(np.zeros(shape) for _ in range(p.layers)))


def _cell(W, b, x, h, c, H):
    z = np.concatenate([x, h], axis=-1) @ W.T + b
    i = _sigmoid(z[..., :H])
    f = _sigmoid(z[..., H:2 * H])
    g = np.tanh(z[..., 2 * H:3 * H])
    o = _sigmoid(z[..., 3 * H:])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new, (i, f, g, o)


def _to_box(p, y):
    return p.lower + 0.5 * (y + 1.0) * (p.upper - p.lower)


def rnn_forward(p: LstmParams, q, h_prev: Optional[HiddenState] = None):
    """One controller step from a raw state ``q``; returns (control, new hidden state)."""
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != p.input_dim:
        raise ValueError(f"state has dimension {q.shape[-1]}, network expects {p.input_dim}")
    if h_prev is None:
        h_prev = HiddenState.zeros(p, None if q.ndim == 1 else q.shape[0])
    if len(h_prev.h) != p.layers or h_prev.h[0].shape[-1] != p.hidden_size:
        raise ValueError("hidden state does not match the network shape")
    x = p.normalize(q)
    hs, cs = [], []
    for layer in range(p.layers):
        x, c, _ = _cell(p.W[layer], p.b[layer], x, h_prev.h[layer], h_prev.c[layer], p.hidden_size)
        hs.append(x)
        cs.append(c)
    y = _SHRINK * np.tanh(x @ p.W_out.T + p.b_out)
    return _to_box(p, y), HiddenState(tuple(hs), tuple(cs))


def run_sequence(p: LstmParams, states) -> np.ndarray:
    """Teacher-forced unroll from zero memory over q_0..q_K; returns the K controls.

    The final state only closes the trace, so it produces no control.
    """
    arr = states.states if isinstance(states, Trace) else np.asarray(states, dtype=float)
    out, h = [], None
    for q in arr[:-1]:
        u, h = rnn_forward(p, q, h)
        out.append(u)
    return np.array(out).reshape(len(arr) - 1, p.output_dim)


def _forward_batch(p, X):
    """Unroll on normalized inputs X (B, T, n), caching everything BPTT needs."""
    B, T, _ = X.shape
    H = p.hidden_size
    h = [np.zeros((B, H)) for _ in range(p.layers)]
    c = [np.zeros((B, H)) for _ in range(p.layers)]
    cache = []
    tops = np.empty((T, B, H))
    for t in range(T):
        x = X[:, t]
        step = []
        for layer in range(p.layers):
            inp = np.concatenate([x, h[layer]], axis=1)
            c_prev = c[layer]
            h[layer], c[layer], gates = _cell(p.W[layer], p.b[layer], x, h[layer], c_prev, H)
            step.append((inp, c_prev, c[layer], gates))
            x = h[layer]
        cache.append(step)
        tops[t] = x
    Y = _SHRINK * np.tanh(tops @ p.W_out.T + p.b_out)  # (T, B, m)
    return Y, tops, cache


def loss_and_grad(p: LstmParams, X, U):
    """Sum of squared control errors per sequence, averaged over the batch.

    X: normalized states (B, T, n); U: target controls (B, T, m).
    Returns (loss, {name: gradient}).
    """
    B, T, _ = X.shape
    H = p.hidden_size
    Y, tops, cache = _forward_batch(p, X)
    half_range = 0.5 * (p.upper - p.lower)
    pred = p.lower + (Y + 1.0) * half_range
    err = pred - np.transpose(U, (1, 0, 2))
    loss = float(np.sum(err * err) / B)
    dY = 2.0 * err / B * half_range
    dA = dY * (_SHRINK - Y * Y / _SHRINK)  # d/da of SHRINK*tanh(a)
    grads = {name: np.zeros_like(a) for name, a in p.arrays().items()}
    grads["W_out"] += np.einsum("tbm,tbh->mh", dA, tops)
    grads["b_out"] += dA.sum(axis=(0, 1))
    dtop = dA @ p.W_out  # (T, B, H)
    dh_next = [np.zeros((B, H)) for _ in range(p.layers)]
    dc_next = [np.zeros((B, H)) for _ in range(p.layers)]
    for t in reversed(range(T)):
        dx_above = dtop[t]
        for layer in reversed(range(p.layers)):
            inp, c_prev, c_new, (i, f, g, o) = cache[t][layer]
            dh = dx_above + dh_next[layer]
            tc = np.tanh(c_new)
            dc = dc_next[layer] + dh * o * (1.0 - tc * tc)
            dz = np.concatenate([
                dc * g * i * (1.0 - i),
                dc * c_prev * f * (1.0 - f),
                dc * i * (1.0 - g * g),
                dh * tc * o * (1.0 - o),
            ], axis=1)
            grads[f"W{layer}"] += dz.T @ inp
            grads[f"b{layer}"] += dz.sum(axis=0)
            dinp = dz @ p.W[layer]
            n_in = inp.shape[1] - H
            dx_above = dinp[:, :n_in]
            dh_next[layer] = dinp[:, n_in:]
            dc_next[layer] = dc * f
    return loss, grads


@dataclass
class DatasetRecord:
    states: np.ndarray  # (K + 1, n)
    ref_controls: np.ndarray  # (K, m)
    robustness: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.ref_controls = np.asarray(self.ref_controls, dtype=float)
        if len(self.ref_controls) != len(self.states) - 1:
            raise ValueError("need exactly one reference control per transition")


@dataclass
class TrainConfig:
    epochs: int = 300
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    hidden_size: int = 64
    layers: int = 2
    holdout: float = 0.1
    clip_norm: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1 or not self.learning_rate > 0 or self.batch_size < 1:
            raise ValueError("epochs >= 1, learning_rate > 0 and batch_size >= 1 required")


@dataclass
class TrainResult:
    params: LstmParams
    train_loss: list  # per epoch, index 0 = before training
    val_loss: list
    best_epoch: int
    val_indices: list


def fit_normalization(dataset):
    """Zero mean / unit range per state component over all dataset states."""
    allq = np.concatenate([r.states for r in dataset], axis=0)
    span = allq.max(axis=0) - allq.min(axis=0)
    return allq.mean(axis=0), np.where(span > 1e-12, span, 1.0)


def _stack(p, records):
    X = np.stack([p.normalize(r.states[:-1]) for r in records])
    U = np.stack([r.ref_controls for r in records])
    return X, U


def _mean_loss(p, X, U, chunk=256):
    if len(X) == 0:
        return float("nan")
    total = 0.0
    for s in range(0, len(X), chunk):
        Y, _, _ = _forward_batch(p, X[s:s + chunk])
        pred = p.lower + (Y + 1.0) * 0.5 * (p.upper - p.lower)
        total += float(np.sum((pred - np.transpose(U[s:s + chunk], (1, 0, 2))) ** 2))
    return total / len(X)


def train(dataset, cfg: TrainConfig | None = None, bounds: ControlBounds | None = None) -> TrainResult:
    """Fit the controller to the reference controls of ``dataset``.

    Returns the parameters with the best held-out loss (training loss when the
    dataset is too small to hold any records out).
    """
    cfg = cfg or TrainConfig()
    if not dataset:
        raise ValueError("empty dataset")
    n, m = dataset[0].states.shape[1], dataset[0].ref_controls.shape[1]
    T = len(dataset[0].ref_controls)
    for r in dataset:
        if r.states.shape[1] != n or r.ref_controls.shape != (T, m):
            raise ValueError("all records must share state/control dimensions and length")
    if bounds is None:
        raise ValueError("control bounds are required")
    rng = np.random.default_rng(cfg.seed)
    idx = rng.permutation(len(dataset))
    n_val = int(round(cfg.holdout * len(dataset))) if len(dataset) >= 10 else 0
    val_idx, tr_idx = sorted(idx[:n_val].tolist()), sorted(idx[n_val:].tolist())
    mean, scale = fit_normalization(dataset)
    p = LstmParams.init(n, m, bounds, cfg.hidden_size, cfg.layers, cfg.seed, mean, scale)
    Xtr, Utr = _stack(p, [dataset[i] for i in tr_idx])
    Xva, Uva = _stack(p, [dataset[i] for i in val_idx]) if val_idx else (Xtr[:0], Utr[:0])

    names = list(p.arrays())
    mom = {k: np.zeros_like(a) for k, a in p.arrays().items()}
    vel = {k: np.zeros_like(a) for k, a in p.arrays().items()}
    train_hist = [_mean_loss(p, Xtr, Utr)]
    val_hist = [_mean_loss(p, Xva, Uva)]
    score = lambda e: val_hist[e] if val_idx else train_hist[e]  # noqa: E731
    best, best_epoch = p.copy(), 0
    t = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(Xtr))
        total = 0.0
        for s in range(0, len(order), cfg.batch_size):
            sel = order[s:s + cfg.batch_size]
            loss, grads = loss_and_grad(p, Xtr[sel], Utr[sel])
            total += loss * len(sel)
            gnorm = np.sqrt(sum(float(np.sum(grads[k] ** 2)) for k in names))
            if gnorm > cfg.clip_norm:
                for k in names:
                    grads[k] *= cfg.clip_norm / gnorm
            t += 1
            arrays = p.arrays()
            for k in names:
                mom[k] = cfg.beta1 * mom[k] + (1 - cfg.beta1) * grads[k]
                vel[k] = cfg.beta2 * vel[k] + (1 - cfg.beta2) * grads[k] ** 2
                mhat = mom[k] / (1 - cfg.beta1**t)
                vhat = vel[k] / (1 - cfg.beta2**t)
                arrays[k] -= cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.eps)
        train_hist.append(total / len(Xtr))
        val_hist.append(_mean_loss(p, Xva, Uva))
        if score(epoch) < score(best_epoch):
            best, best_epoch = p.copy(), epoch
    return TrainResult(best, train_hist, val_hist, best_epoch, val_idx)


def record_loss(p: LstmParams, record: DatasetRecord):
    X, U = _stack(p, [record])
    return loss_and_grad(p, X, U)


def gradient_check(p: LstmParams, record: DatasetRecord, n_params=50, step=1e-5, seed=0,
                   grad_fn=None, floor=1e-5):
    """Max relative error between analytic and central-difference gradients.

    Samples ``n_params`` entries spread round-robin over every trainable array.
    The error of one entry is |analytic - numeric| / max(|numeric|, floor).
    """
    if len(record.ref_controls) < 1:
        raise ValueError("record needs at least one transition")
    grad_fn = grad_fn or record_loss
    _, grads = grad_fn(p, record)
    rng = np.random.default_rng(seed)
    arrays = p.arrays()
    names = list(arrays)
    worst = 0.0
    for j in range(n_params):
        name = names[j % len(names)]
        arr = arrays[name]
        flat = arr.reshape(-1)
        i = int(rng.integers(flat.size))
        old = flat[i]
        flat[i] = old + step
        lp = record_loss(p, record)[0]
        flat[i] = old - step
        lm = record_loss(p, record)[0]
        flat[i] = old
        numeric = (lp - lm) / (2 * step)
        analytic = grads[name].reshape(-1)[i]
        worst = max(worst, abs(analytic - numeric) / max(abs(numeric), floor))
    return worst


def save_params(p: LstmParams, path):
    """Versioned npz container: JSON shape header plus row-major arrays."""
    header = {"format_version": FORMAT_VERSION, "input_dim": p.input_dim, "output_dim": p.output_dim,
              "hidden_size": p.hidden_size, "layers": p.layers}
    arrays = {k: np.ascontiguousarray(v) for k, v in p.arrays().items()}
    arrays.update(in_mean=p.in_mean, in_scale=p.in_scale, lower=p.lower, upper=p.upper)
    buf = io.BytesIO()
    np.savez(buf, header=np.array(json.dumps(header, sort_keys=True)), **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_params(path) -> LstmParams:
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported parameter file version {header.get('format_version')}")
        layers = header["layers"]
        p = LstmParams(
            header["input_dim"], header["output_dim"], header["hidden_size"],
            [z[f"W{i}"].copy() for i in range(layers)], [z[f"b{i}"].copy() for i in range(layers)],
            z["W_out"].copy(), z["b_out"].copy(), z["in_mean"].copy(), z["in_scale"].copy(),
            z["lower"].copy(), z["upper"].copy(),
        )
    for name, arr in p.arrays().items():
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite values in {name}")
    return p
