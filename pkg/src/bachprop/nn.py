"""Small numpy kernel: GRU, dense layers, softmax/cross-entropy, Adam, grad check.

Everything is float64. Sequence tensors are laid out time-major, (T, B, width).
Layer objects hold only shapes and a name prefix; the numbers live in a flat
``params`` dict so the optimizer and checkpoints can treat them uniformly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatch, IndexOutOfRange, NonFiniteInput

PROB_FLOOR = 1e-12


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(v, temperature: float = 1.0, axis: int = -1):
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    v = np.asarray(v, dtype=np.float64)
    if np.isnan(v).any():
        raise NonFiniteInput("softmax input contains NaN")
    z = v / temperature
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(v, axis: int = -1):
    z = v - np.max(v, axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def cross_entropy(p, target: int) -> float:
    p = np.asarray(p, dtype=np.float64)
    if not 0 <= target < len(p):
        raise IndexOutOfRange(f"target {target} outside 0..{len(p) - 1}")
    return float(-np.log(max(p[target], PROB_FLOOR)))


def one_hot(indices, width: int):
    """One-hot rows; negative indices give all-zero rows (padding)."""
    indices = np.asarray(indices)
    out = np.zeros(indices.shape + (width,))
    valid = indices >= 0
    if (indices[valid] >= width).any():
        raise IndexOutOfRange(f"index out of range for width {width}")
    out[valid, indices[valid]] = 1.0
    return out


def glorot(rng, fan_in: int, fan_out: int):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class GruParams(NamedTuple):
    """Gate blocks are stacked column-wise in the order update, reset, candidate."""

    W: np.ndarray  # (n_in, 3h)
    U: np.ndarray  # (h, 3h)
    b: np.ndarray  # (3h,)

    @property
    def hidden(self) -> int:
        return self.U.shape[0]


def gru_step(p: GruParams, x, h):
    """One GRU update for a single vector or a (B, n) batch."""
    x = np.asarray(x, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    n = p.hidden
    if p.W.shape[1] != 3 * n or p.U.shape != (n, 3 * n) or p.b.shape != (3 * n,):
        raise DimensionMismatch("inconsistent GRU parameter shapes")
    if x.shape[-1] != p.W.shape[0] or h.shape[-1] != n:
        raise DimensionMismatch(f"x {x.shape} / h {h.shape} do not fit W {p.W.shape}")
    a = x @ p.W + p.b
    hu = h @ p.U[:, :2 * n]
    z = sigmoid(a[..., :n] + hu[..., :n])
    r = sigmoid(a[..., n:2 * n] + hu[..., n:])
    c = np.tanh(a[..., 2 * n:] + (r * h) @ p.U[:, 2 * n:])
    return (1.0 - z) * h + z * c


class GRULayer:
    def __init__(self, name: str, n_in: int, n_hidden: int):
        self.name, self.n_in, self.n_hidden = name, n_in, n_hidden

    def shapes(self):
        h = self.n_hidden
        return [(f"{self.name}.W", (self.n_in, 3 * h)), (f"{self.name}.U", (h, 3 * h)),
                (f"{self.name}.b", (3 * h,))]

    def init(self, rng, params):
        h = self.n_hidden
        params[f"{self.name}.W"] = np.concatenate([glorot(rng, self.n_in, h) for _ in range(3)], axis=1)
        params[f"{self.name}.U"] = np.concatenate([glorot(rng, h, h) for _ in range(3)], axis=1)
        params[f"{self.name}.b"] = np.zeros(3 * h)

    def view(self, params) -> GruParams:
        return GruParams(params[f"{self.name}.W"], params[f"{self.name}.U"], params[f"{self.name}.b"])

    def step(self, params, x, h):
        return gru_step(self.view(params), x, h)

    def forward(self, params, xs, h0):
        p = self.view(params)
        n = self.n_hidden
        T, B, _ = xs.shape
        ax = (xs.reshape(T * B, -1) @ p.W + p.b).reshape(T, B, 3 * n)
        Uzr, Uc = p.U[:, :2 * n], p.U[:, 2 * n:]
        hs = np.empty((T, B, n), dtype=ax.dtype)
        z = np.empty_like(hs)
        r = np.empty_like(hs)
        c = np.empty_like(hs)
        h = h0
        for t in range(T):
            hu = h @ Uzr
            z[t] = sigmoid(ax[t, :, :n] + hu[:, :n])
            r[t] = sigmoid(ax[t, :, n:2 * n] + hu[:, n:])
            c[t] = np.tanh(ax[t, :, 2 * n:] + (r[t] * h) @ Uc)
            h = (1.0 - z[t]) * h + z[t] * c[t]
            hs[t] = h
        prev = np.concatenate([np.asarray(h0, dtype=hs.dtype)[None], hs[:-1]], axis=0)
        return hs, (xs, prev, z, r, c)

    def backward(self, params, cache, dhs, grads, need_dx: bool = True):
        """Accumulate parameter gradients; the gradient into h0 is dropped (truncation)."""
        p = self.view(params)
        n = self.n_hidden
        xs, prev, z, r, c = cache
        T, B, _ = dhs.shape
        Uz, Ur, Uc = p.U[:, :n], p.U[:, n:2 * n], p.U[:, 2 * n:]
        da = np.empty((T, B, 3 * n))
        dU = np.zeros_like(p.U)
        dh_next = np.zeros((B, n))
        for t in range(T - 1, -1, -1):
            dh = dhs[t] + dh_next
            hp = prev[t]
            dz = dh * (c[t] - hp) * z[t] * (1.0 - z[t])
            dc = dh * z[t] * (1.0 - c[t] ** 2)
            drh = dc @ Uc.T
            dr = drh * hp * r[t] * (1.0 - r[t])
            dh_next = dh * (1.0 - z[t]) + drh * r[t] + dz @ Uz.T + dr @ Ur.T
            da[t, :, :n] = dz
            da[t, :, n:2 * n] = dr
            da[t, :, 2 * n:] = dc
            dU[:, :n] += hp.T @ dz
            dU[:, n:2 * n] += hp.T @ dr
            dU[:, 2 * n:] += (r[t] * hp).T @ dc
        flat = da.reshape(T * B, 3 * n)
        grads[f"{self.name}.W"] += xs.reshape(T * B, -1).T @ flat
        grads[f"{self.name}.U"] += dU
        grads[f"{self.name}.b"] += flat.sum(axis=0)
        if need_dx:
            return (flat @ p.W.T).reshape(T, B, -1)
        return None


class Dense:
    def __init__(self, name: str, n_in: int, n_out: int, relu: bool):
        self.name, self.n_in, self.n_out, self.relu = name, n_in, n_out, relu

    def shapes(self):
        return [(f"{self.name}.W", (self.n_in, self.n_out)), (f"{self.name}.b", (self.n_out,))]

    def init(self, rng, params):
        params[f"{self.name}.W"] = glorot(rng, self.n_in, self.n_out)
        params[f"{self.name}.b"] = np.zeros(self.n_out)

    def forward(self, params, x):
        y = x @ params[f"{self.name}.W"] + params[f"{self.name}.b"]
        if self.relu:
            y = np.maximum(y, 0.0)
        return y, (x, y)

    def backward(self, params, cache, dy, grads, need_dx: bool = True):
        x, y = cache
        if self.relu:
            dy = dy * (y > 0)
        flat_x = x.reshape(-1, self.n_in)
        flat_dy = dy.reshape(-1, self.n_out)
        grads[f"{self.name}.W"] += flat_x.T @ flat_dy
        grads[f"{self.name}.b"] += flat_dy.sum(axis=0)
        if need_dx:
            return dy @ params[f"{self.name}.W"].T
        return None


class Readout:
    """ReLU layer of width ``n_out`` followed by a linear layer giving logits."""

    def __init__(self, name: str, n_in: int, n_out: int):
        self.hidden = Dense(f"{name}.hid", n_in, n_out, relu=True)
        self.out = Dense(f"{name}.out", n_out, n_out, relu=False)

    def shapes(self):
        return self.hidden.shapes() + self.out.shapes()

    def init(self, rng, params):
        self.hidden.init(rng, params)
        self.out.init(rng, params)

    def forward(self, params, x):
        h, c1 = self.hidden.forward(params, x)
        logits, c2 = self.out.forward(params, h)
        return logits, (c1, c2)

    def backward(self, params, cache, dlogits, grads, need_dx: bool = True):
        c1, c2 = cache
        dh = self.out.backward(params, c2, dlogits, grads)
        return self.hidden.backward(params, c1, dh, grads, need_dx)


def softmax_xent(logits, targets, weights):
    """Masked cross-entropy over the last axis.

    Returns per-position CE (floored at PROB_FLOOR), argmax hits, and the
    gradient of ``sum(weights * CE)`` with respect to ``logits``.
    """
    logp = log_softmax(logits)
    safe = np.where(targets >= 0, targets, 0)
    picked = np.take_along_axis(logp, safe[..., None], axis=-1)[..., 0]
    ce = -np.maximum(picked, np.log(PROB_FLOOR))
    hits = (np.argmax(logits, axis=-1) == targets)
    d = np.exp(logp)
    np.put_along_axis(d, safe[..., None], np.take_along_axis(d, safe[..., None], axis=-1) - 1.0, axis=-1)
    # the floor is flat, so positions where it binds contribute no gradient
    live = picked > np.log(PROB_FLOOR)
    d *= (weights * live)[..., None]
    return ce, hits, d


def clip_global_norm(grads: dict, max_norm: float) -> float:
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_update(state: AdamState, params: dict, grads: dict) -> None:
    """In-place Adam step with bias correction."""
    state.step += 1
    t = state.step
    for key, g in grads.items():
        p = params[key]
        if g.shape != p.shape:
            raise DimensionMismatch(f"{key}: gradient {g.shape} vs parameter {p.shape}")
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(p)
            state.v[key] = np.zeros_like(p)
        v = state.v[key]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1 ** t)
        v_hat = v / (1.0 - state.beta2 ** t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


class GradCheckReport(NamedTuple):
    max_rel_error: float
    worst_key: str
    checked: int
    refined: int  # coordinates re-evaluated in extended precision
    passed: bool


def _central_difference(loss, flat, i, step):
    old = flat[i]
    flat[i] = old + step
    lp = loss()
    flat[i] = old - step
    lm = loss()
    flat[i] = old
    return (lp - lm) / (2 * step)


def grad_check(loss, params: dict, analytic: dict, step: float = 1e-5, tolerance: float = 1e-4,
               refine_below: float | None = 1e-6, max_per_key: int | None = None,
               rng=None) -> GradCheckReport:
    """Compare ``analytic`` gradients with central differences of ``loss(params)``.

    Relative error is ``|ga - gn| / max(|ga|, |gn|, 1e-8)``. In float64 the
    difference quotient carries round-off of order 1e-11, which swamps
    gradients near 1e-8; coordinates whose analytic gradient is smaller than
    ``refine_below`` are therefore re-evaluated with the parameters promoted
    to long double (same step, same stencil). ``loss`` must preserve the
    dtype of the parameters for that to help. With ``max_per_key`` only a
    random subset of coordinates per array is probed.
    """
    extended = None
    worst, worst_key, checked, refined = 0.0, "", 0, 0
    for key, p in params.items():
        flat = p.reshape(-1)
        coords = np.arange(flat.size)
        if max_per_key is not None and flat.size > max_per_key:
            coords = (rng or np.random.default_rng(0)).choice(flat.size, max_per_key, replace=False)
        ga = np.asarray(analytic[key]).reshape(-1)
        for i in coords:
            if refine_below is not None and abs(ga[i]) < refine_below:
                if extended is None:
                    extended = {k: v.astype(np.longdouble) for k, v in params.items()}
                gn = float(_central_difference(lambda: loss(extended), extended[key].reshape(-1), i, step))
                refined += 1
            else:
                gn = float(_central_difference(lambda: loss(params), flat, i, step))
            rel = abs(ga[i] - gn) / max(abs(ga[i]), abs(gn), 1e-8)
            checked += 1
            if rel > worst:
                worst, worst_key = rel, f"{key}[{i}]"
    return GradCheckReport(float(worst), worst_key, checked, refined, bool(worst < tolerance))
