"""Note-triple sequence models.

All variants predict note n+1 from the history up to note n, one feature at
a time: dT first, then T given dT, then P given dT and T. They differ in how
the history is summarised and in which already-known features each readout
sees:

* ``bachprop`` -- one shared 3-layer GRU stack. The dT readout sees H1, the T
  readout sees H1, H2 and dT, the P readout sees H1, H2, H3, dT and T.
* ``indepbp`` -- same stack, but readout i only sees layer i and nothing of
  the next note (features treated as independent).
* ``polydac`` -- three separate 3-layer GRU stacks, one per feature, each fed
  the current note plus the features of the next note already chosen.
* ``mlp`` -- no recurrence; a 3-layer ReLU network over the 5 most recent
  notes and the known next-note features (unknown slots zeroed).

Two code paths exist per variant: ``window`` runs a teacher-forced batch of
time steps with full backpropagation, while ``forward_note``/``head_logits``
advance a single note at a time for sampling. Tests check that they agree.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IndexOutOfRange, MalformedEncoding, UnknownVariant
from .nn import GRULayer, Dense, Readout, one_hot, softmax, softmax_xent
from .score import FEATURES, Dictionaries, EncodedScore

VARIANTS = ("bachprop", "indepbp", "mlp", "polydac")
DEFAULT_HIDDEN = {"bachprop": 128, "indepbp": 128, "mlp": 124, "polydac": (16, 128, 256)}
MLP_CONTEXT = 5


@dataclass
class WindowResult:
    ce: np.ndarray  # (3,) summed cross-entropy per feature over unmasked positions
    hits: np.ndarray  # (3,) argmax hits per feature
    count: int
    loss: float  # mean over positions of the mean of the three CEs
    grads: dict | None
    state: object


def _check_indices(note, sizes):
    note = np.asarray(note)
    for k, size in enumerate(sizes):
        col = note[..., k]
        if (col < 0).any() or (col >= size).any():
            raise IndexOutOfRange(f"{FEATURES[k]} index outside 0..{size - 1}")
    return note


class Network:
    kind = ""

    def __init__(self, sizes):
        self.sizes = tuple(int(s) for s in sizes)
        self.L = sum(self.sizes)

    # -- parameters ---------------------------------------------------------
    def layers(self):
        raise NotImplementedError

    def param_shapes(self):
        return [s for layer in self.layers() for s in layer.shapes()]

    def init_params(self, rng):
        params = {}
        for layer in self.layers():
            layer.init(rng, params)
        return {k: params[k] for k, _ in self.param_shapes()}

    @property
    def hidden(self):
        return self.hs if hasattr(self, "hs") else self.h

    def zero_grads(self, params):
        return {k: np.zeros_like(v) for k, v in params.items()}

    # -- shared helpers -----------------------------------------------------
    def encode_notes(self, idx):
        """Concatenated one-hots for an index array (..., 3); -1 encodes padding."""
        return np.concatenate([one_hot(idx[..., k], self.sizes[k]) for k in range(3)], axis=-1)

    def _losses(self, logits, targets, mask, need_grad):
        count = int(mask.sum())
        weights = mask / (3.0 * max(count, 1))
        # keep the logits' dtype so the loss can be evaluated in extended precision
        ce = np.zeros(3, dtype=logits[0].dtype)
        hits = np.zeros(3)
        dlogits = []
        for k in range(3):
            c, h, d = softmax_xent(logits[k], targets[..., k], weights)
            ce[k] = (c * mask).sum()
            hits[k] = (h * mask).sum()
            dlogits.append(d if need_grad else None)
        loss = ce.sum() / (3.0 * count) if count else ce.dtype.type(0)
        return ce, hits, count, loss, dlogits

    def window(self, params, inputs, targets, mask, state, need_grad=True) -> WindowResult:
        raise NotImplementedError

    def initial_state(self, batch):
        raise NotImplementedError

    def forward_note(self, params, state, note):
        raise NotImplementedError

    def head_logits(self, params, state, dT=None, T=None):
        raise NotImplementedError


class _StackNetwork(Network):
    """Shared GRU stack: BachProp and IndepBP."""

    conditioned = True

    def __init__(self, sizes, hidden=128):
        super().__init__(sizes)
        h = int(hidden)
        self.h = h
        self.grus = [GRULayer("gru1", self.L, h), GRULayer("gru2", h, h), GRULayer("gru3", h, h)]
        Ld, Lt, Lp = self.sizes
        if self.conditioned:
            ins = (h, 2 * h + Ld, 3 * h + Ld + Lt)
        else:
            ins = (h, h, h)
        self.heads = [Readout(f"head_{f}", n, L) for f, n, L in zip(FEATURES, ins, self.sizes)]

    def layers(self):
        return self.grus + self.heads

    def initial_state(self, batch):
        return tuple(np.zeros((batch, self.h)) for _ in range(3))

    def _head_inputs(self, H, cd, ct):
        H1, H2, H3 = H
        if self.conditioned:
            return (H1, np.concatenate([H1, H2, cd], axis=-1), np.concatenate([H1, H2, H3, cd, ct], axis=-1))
        return (H1, H2, H3)

    def window(self, params, inputs, targets, mask, state, need_grad=True):
        X = self.encode_notes(inputs)
        cd = one_hot(targets[..., 0], self.sizes[0])
        ct = one_hot(targets[..., 1], self.sizes[1])
        H, caches = [], []
        x = X
        for gru, h0 in zip(self.grus, state):
            x, c = gru.forward(params, x, h0)
            H.append(x)
            caches.append(c)
        head_in = self._head_inputs(H, cd, ct)
        logits, hcaches = [], []
        for head, inp in zip(self.heads, head_in):
            lg, c = head.forward(params, inp)
            logits.append(lg)
            hcaches.append(c)
        ce, hits, count, loss, dlogits = self._losses(logits, targets, mask, need_grad)
        new_state = tuple(h[-1].copy() for h in H)
        if not need_grad:
            return WindowResult(ce, hits, count, loss, None, new_state)

        grads = self.zero_grads(params)
        h = self.h
        dH = [np.zeros_like(H[0]) for _ in range(3)]
        dins = [head.backward(params, c, d, grads) for head, c, d in zip(self.heads, hcaches, dlogits)]
        if self.conditioned:
            dH[0] += dins[0] + dins[1][..., :h] + dins[2][..., :h]
            dH[1] += dins[1][..., h:2 * h] + dins[2][..., h:2 * h]
            dH[2] += dins[2][..., 2 * h:3 * h]
        else:
            for i in range(3):
                dH[i] += dins[i]
        for i in (2, 1, 0):
            dx = self.grus[i].backward(params, caches[i], dH[i], grads, need_dx=i > 0)
            if i > 0:
                dH[i - 1] += dx
        return WindowResult(ce, hits, count, loss, grads, new_state)

    def forward_note(self, params, state, note):
        note = _check_indices(note, self.sizes)
        x = self.encode_notes(note)
        out = []
        for gru, h in zip(self.grus, state):
            x = gru.step(params, x, h)
            out.append(x)
        return tuple(out)

    def head_logits(self, params, state, dT=None, T=None):
        B = state[0].shape[0]
        cd = one_hot(np.full(B, -1 if dT is None else dT), self.sizes[0])
        ct = one_hot(np.full(B, -1 if T is None else T), self.sizes[1])
        k = 0 if dT is None else (1 if T is None else 2)
        inp = self._head_inputs(state, cd, ct)[k]
        return self.heads[k].forward(params, inp)[0]


class BachPropNet(_StackNetwork):
    kind = "bachprop"
    conditioned = True


class IndepBPNet(_StackNetwork):
    kind = "indepbp"
    conditioned = False


class PolyDACNet(Network):
    """Three independent GRU stacks; stack k sees the current note and next-note features < k."""

    kind = "polydac"

    def __init__(self, sizes, hidden=(16, 128, 256)):
        super().__init__(sizes)
        if np.isscalar(hidden):
            hidden = (int(hidden),) * 3
        self.hs = tuple(int(h) for h in hidden)
        Ld, Lt, _ = self.sizes
        ins = (self.L, self.L + Ld, self.L + Ld + Lt)
        self.stacks = []
        for f, n_in, h in zip(FEATURES, ins, self.hs):
            self.stacks.append([GRULayer(f"{f}net.gru1", n_in, h), GRULayer(f"{f}net.gru2", h, h),
                                GRULayer(f"{f}net.gru3", h, h)])
        self.heads = [Readout(f"head_{f}", h, L) for f, h, L in zip(FEATURES, self.hs, self.sizes)]

    def layers(self):
        return [g for stack in self.stacks for g in stack] + self.heads

    def initial_state(self, batch):
        return tuple(tuple(np.zeros((batch, h)) for _ in range(3)) for h in self.hs)

    def window(self, params, inputs, targets, mask, state, need_grad=True):
        X = self.encode_notes(inputs)
        cd = one_hot(targets[..., 0], self.sizes[0])
        ct = one_hot(targets[..., 1], self.sizes[1])
        stack_in = (X, np.concatenate([X, cd], axis=-1), np.concatenate([X, cd, ct], axis=-1))
        all_caches, new_state, logits, hcaches = [], [], [], []
        for stack, x, st, head in zip(self.stacks, stack_in, state, self.heads):
            caches, last = [], []
            for gru, h0 in zip(stack, st):
                x, c = gru.forward(params, x, h0)
                caches.append(c)
                last.append(x[-1].copy())
            all_caches.append(caches)
            new_state.append(tuple(last))
            lg, hc = head.forward(params, x)
            logits.append(lg)
            hcaches.append(hc)
        ce, hits, count, loss, dlogits = self._losses(logits, targets, mask, need_grad)
        new_state = tuple(new_state)
        if not need_grad:
            return WindowResult(ce, hits, count, loss, None, new_state)
        grads = self.zero_grads(params)
        for stack, caches, head, hc, d in zip(self.stacks, all_caches, self.heads, hcaches, dlogits):
            dx = head.backward(params, hc, d, grads)
            for i in (2, 1, 0):
                dx = stack[i].backward(params, caches[i], dx, grads, need_dx=i > 0)
        return WindowResult(ce, hits, count, loss, grads, new_state)

    # Stepwise state: (dT-stack states after note n, T/P-stack states after
    # note n-1, one-hot of note n still to be combined with note n+1's features)
    def _step_stack(self, params, k, x, states):
        out = []
        for gru, h in zip(self.stacks[k], states):
            x = gru.step(params, x, h)
            out.append(x)
        return tuple(out)

    def forward_note(self, params, state, note):
        note = _check_indices(note, self.sizes)
        if state is None:
            state = {"stacks": self.initial_state(note.shape[0]), "pending": None}
        d_states, t_states, p_states = state["stacks"]
        pending = state["pending"]
        if pending is not None:
            cd = one_hot(note[:, 0], self.sizes[0])
            ct = one_hot(note[:, 1], self.sizes[1])
            t_states = self._step_stack(params, 1, np.concatenate([pending, cd], axis=-1), t_states)
            p_states = self._step_stack(params, 2, np.concatenate([pending, cd, ct], axis=-1), p_states)
        x = self.encode_notes(note)
        d_states = self._step_stack(params, 0, x, d_states)
        return {"stacks": (d_states, t_states, p_states), "pending": x}

    def head_logits(self, params, state, dT=None, T=None):
        d_states, t_states, p_states = state["stacks"]
        x = state["pending"]
        B = x.shape[0]
        if dT is None:
            return self.heads[0].forward(params, d_states[-1])[0]
        cd = one_hot(np.full(B, dT), self.sizes[0])
        if T is None:
            top = self._step_stack(params, 1, np.concatenate([x, cd], axis=-1), t_states)[-1]
            return self.heads[1].forward(params, top)[0]
        ct = one_hot(np.full(B, T), self.sizes[1])
        top = self._step_stack(params, 2, np.concatenate([x, cd, ct], axis=-1), p_states)[-1]
        return self.heads[2].forward(params, top)[0]


class MLPNet(Network):
    """Feed-forward baseline over the last five notes plus masked next-note slots."""

    kind = "mlp"

    def __init__(self, sizes, hidden=124):
        super().__init__(sizes)
        h = int(hidden)
        self.h = h
        Ld, Lt, _ = self.sizes
        self.n_in = MLP_CONTEXT * self.L + Ld + Lt
        self.trunk = [Dense("mlp1", self.n_in, h, relu=True), Dense("mlp2", h, h, relu=True),
                      Dense("mlp3", h, h, relu=True)]
        self.heads = [Readout(f"head_{f}", h, L) for f, L in zip(FEATURES, self.sizes)]

    def layers(self):
        return self.trunk + self.heads

    def initial_state(self, batch):
        # the notes preceding the window; -1 marks a missing note
        return np.full((MLP_CONTEXT - 1, batch, 3), -1, dtype=np.int64)

    def _context(self, history):
        """(W + 4, B, 3) indices -> (W, B, 5L) one-hots, oldest note first."""
        oh = self.encode_notes(history)
        W = history.shape[0] - (MLP_CONTEXT - 1)
        return np.concatenate([oh[k:k + W] for k in range(MLP_CONTEXT)], axis=-1)

    def _inputs(self, ctx, cd, ct):
        zd, zt = np.zeros_like(cd), np.zeros_like(ct)
        # dT head: both next-note slots masked; T head: T slot masked; P head: none
        return (np.concatenate([ctx, zd, zt], axis=-1), np.concatenate([ctx, cd, zt], axis=-1),
                np.concatenate([ctx, cd, ct], axis=-1))

    def _trunk(self, params, x):
        caches = []
        for layer in self.trunk:
            x, c = layer.forward(params, x)
            caches.append(c)
        return x, caches

    def window(self, params, inputs, targets, mask, state, need_grad=True):
        history = np.concatenate([state, inputs], axis=0)
        ctx = self._context(history)
        cd = one_hot(targets[..., 0], self.sizes[0])
        ct = one_hot(targets[..., 1], self.sizes[1])
        logits, caches = [], []
        for head, x in zip(self.heads, self._inputs(ctx, cd, ct)):
            z, tc = self._trunk(params, x)
            lg, hc = head.forward(params, z)
            logits.append(lg)
            caches.append((tc, hc))
        ce, hits, count, loss, dlogits = self._losses(logits, targets, mask, need_grad)
        new_state = history[-(MLP_CONTEXT - 1):].copy()
        if not need_grad:
            return WindowResult(ce, hits, count, loss, None, new_state)
        grads = self.zero_grads(params)
        for head, (tc, hc), d in zip(self.heads, caches, dlogits):
            dz = head.backward(params, hc, d, grads)
            for i in (2, 1, 0):
                dz = self.trunk[i].backward(params, tc[i], dz, grads, need_dx=i > 0)
        return WindowResult(ce, hits, count, loss, grads, new_state)

    def forward_note(self, params, state, note):
        note = _check_indices(note, self.sizes)
        if state is None:
            state = np.full((MLP_CONTEXT, note.shape[0], 3), -1, dtype=np.int64)
        return np.concatenate([state[1:], note[None].astype(np.int64)], axis=0)

    def head_logits(self, params, state, dT=None, T=None):
        B = state.shape[1]
        ctx = self._context(state)[0]
        cd = one_hot(np.full(B, -1 if dT is None else dT), self.sizes[0])
        ct = one_hot(np.full(B, -1 if T is None else T), self.sizes[1])
        k = 0 if dT is None else (1 if T is None else 2)
        z, _ = self._trunk(params, self._inputs(ctx, cd, ct)[k])
        return self.heads[k].forward(params, z)[0]


_NETWORKS = {"bachprop": BachPropNet, "indepbp": IndepBPNet, "mlp": MLPNet, "polydac": PolyDACNet}


def make_network(kind: str, sizes, hidden=None) -> Network:
    try:
        cls = _NETWORKS[kind.lower()]
    except KeyError:
        raise UnknownVariant(f"unknown variant {kind!r}; expected one of {', '.join(VARIANTS)}") from None
    return cls(sizes, DEFAULT_HIDDEN[cls.kind] if hidden is None else hidden)


@dataclass
class Model:
    network: Network
    params: dict
    dicts: Dictionaries

    @property
    def kind(self) -> str:
        return self.network.kind

    def n_params(self) -> int:
        return int(sum(v.size for v in self.params.values()))


def build_variant(kind: str, dicts: Dictionaries, hidden=None, rng=None) -> Model:
    network = make_network(kind, dicts.sizes, hidden)
    rng = rng if rng is not None else np.random.default_rng(0)
    return Model(network, network.init_params(rng), dicts)


# -- single-note API used by the generator -----------------------------------

def forward_note(model: Model, state, note):
    """Advance the state by one note given as an index triple (or a (B, 3) batch)."""
    note = np.asarray(note, dtype=np.int64)
    single = note.ndim == 1
    if single:
        note = note[None]
    if state is None and isinstance(model.network, _StackNetwork):
        state = model.network.initial_state(note.shape[0])
    return model.network.forward_note(model.params, state, note)


def head_logits(model: Model, state, dT=None, T=None):
    sizes = model.network.sizes
    if dT is not None and not 0 <= dT < sizes[0]:
        raise IndexOutOfRange(f"dT index {dT} outside 0..{sizes[0] - 1}")
    if T is not None and not 0 <= T < sizes[1]:
        raise IndexOutOfRange(f"T index {T} outside 0..{sizes[1] - 1}")
    return model.network.head_logits(model.params, state, dT, T)[0]


def head_probs(model: Model, state, dT=None, T=None, temperature: float = 1.0):
    """Distribution of the next unknown feature: dT, then T | dT, then P | dT, T."""
    return softmax(head_logits(model, state, dT, T), temperature)


# -- teacher-forced evaluation ----------------------------------------------

def make_batch(encoded, pad_to: int | None = None):
    """Stack encoded scores into (inputs, targets, mask), time-major.

    Input position t holds note t, target position t holds note t+1; padded
    positions carry index -1 and mask 0.
    """
    lengths = [len(e) - 1 for e in encoded]
    T = max(lengths) if pad_to is None else pad_to
    B = len(encoded)
    inputs = np.full((T, B, 3), -1, dtype=np.int64)
    targets = np.full((T, B, 3), -1, dtype=np.int64)
    mask = np.zeros((T, B))
    for b, (e, n) in enumerate(zip(encoded, lengths)):
        idx = np.asarray(e.indices if isinstance(e, EncodedScore) else e)
        inputs[:n, b] = idx[:-1]
        targets[:n, b] = idx[1:]
        mask[:n, b] = 1.0
    return inputs, targets, mask


@dataclass
class EvalResult:
    nll: float
    accuracy: tuple[float, float, float]
    ce: np.ndarray
    hits: np.ndarray
    count: int

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracy))


def evaluate(model: Model, encoded, batch_size: int = 64) -> EvalResult:
    """Teacher-forced NLL and per-feature accuracy over whole scores."""
    ce, hits, count = np.zeros(3), np.zeros(3), 0
    encoded = list(encoded)
    for e in encoded:
        if len(e) < 2:
            raise MalformedEncoding("an encoded score has at least the two boundary notes")
    for start in range(0, len(encoded), batch_size):
        chunk = encoded[start:start + batch_size]
        inputs, targets, mask = make_batch(chunk)
        state = model.network.initial_state(len(chunk))
        res = model.network.window(model.params, inputs, targets, mask, state, need_grad=False)
        ce += res.ce
        hits += res.hits
        count += res.count
    if count == 0:
        return EvalResult(float("nan"), (float("nan"),) * 3, ce, hits, 0)
    nll = float(ce.sum() / (3.0 * count))
    return EvalResult(nll, tuple(float(h / count) for h in hits), ce, hits, count)


def sequence_nll(model: Model, enc: EncodedScore):
    """(mean per-note NLL, (acc_dT, acc_T, acc_P)) for one encoded score."""
    res = evaluate(model, [enc])
    return res.nll, res.accuracy
