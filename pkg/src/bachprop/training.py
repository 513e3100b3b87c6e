"""Stateful truncated-BPTT training with transposition augmentation."""
from __future__ import annotations

import copy
import csv
import io
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import EmptyCorpus
from .model import Model, evaluate, make_batch
from .nn import AdamState, adam_update, clip_global_norm
from .score import encode, transpose_random


@dataclass
class TrainConfig:
    batch_size: int = 32
    trunc_len: int = 128
    val_fraction: float = 0.1
    max_epochs: int = 200
    patience: int = 10
    lr: float = 1e-3
    clip_norm: float = 5.0
    seed: int = 0
    augment: bool = True
    # stop as soon as every monitored accuracy reaches this value
    stop_at_accuracy: float | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.trunc_len < 2:
            raise ValueError("trunc_len must be >= 2")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must be in [0, 1)")


@dataclass
class EpochRecord:
    epoch: int
    train_nll: float
    train_acc: tuple
    val_nll: float | None = None
    val_acc: tuple | None = None

    @property
    def monitored_acc(self) -> tuple:
        return self.val_acc if self.val_acc is not None else self.train_acc


@dataclass
class TrainResult:
    model: Model  # parameters of the best epoch
    log: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    @property
    def best(self) -> EpochRecord:
        return self.log[self.best_epoch - 1]


def split_validation(scores, fraction: float, rng: np.random.Generator):
    """Seeded split by whole songs; returns (train, validation)."""
    scores = list(scores)
    if fraction <= 0 or len(scores) < 2:
        return scores, []
    order = rng.permutation(len(scores))
    n_val = min(len(scores) - 1, max(1, int(round(fraction * len(scores)))))
    val_idx = set(order[:n_val].tolist())
    train = [s for i, s in enumerate(scores) if i not in val_idx]
    val = [s for i, s in enumerate(scores) if i in val_idx]
    return train, val


def run_epoch(model: Model, encoded, config: TrainConfig, adam: AdamState, rng) -> tuple[float, tuple]:
    """One pass over ``encoded`` songs in groups of B; returns running NLL and accuracies."""
    net = model.network
    order = rng.permutation(len(encoded))
    ce, hits, count = np.zeros(3), np.zeros(3), 0
    for start in range(0, len(order), config.batch_size):
        group = [encoded[i] for i in order[start:start + config.batch_size]]
        inputs, targets, mask = make_batch(group)
        state = net.initial_state(len(group))
        for t0 in range(0, len(inputs), config.trunc_len):
            sl = slice(t0, t0 + config.trunc_len)
            res = net.window(model.params, inputs[sl], targets[sl], mask[sl], state)
            if res.count == 0:
                break
            ce += res.ce.astype(np.float64)
            hits += res.hits
            count += res.count
            clip_global_norm(res.grads, config.clip_norm)
            adam_update(adam, model.params, res.grads)
            state = res.state
    nll = float(ce.sum() / (3 * count)) if count else float("nan")
    acc = tuple(float(h / count) for h in hits) if count else (float("nan"),) * 3
    return nll, acc


def train(model: Model, train_scores, val_scores=(), config: TrainConfig | None = None,
          rng: np.random.Generator | None = None, progress=None) -> TrainResult:
    """Train in place and return the parameters of the epoch with the best mean accuracy.

    The monitored accuracy is the validation accuracy when validation songs
    are given, otherwise the running training accuracy of the epoch.
    """
    config = config or TrainConfig()
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    train_scores = list(train_scores)
    if not train_scores:
        raise EmptyCorpus("no training songs")
    dicts = model.dicts
    val_encoded = [encode(s, dicts) for s in val_scores]
    plain = [encode(s, dicts) for s in train_scores]
    adam = AdamState(lr=config.lr)

    result = TrainResult(model=Model(model.network, copy.deepcopy(model.params), dicts))
    best_acc, stale = -1.0, 0
    for epoch in range(1, config.max_epochs + 1):
        if config.augment:
            encoded = [encode(transpose_random(s, dicts, rng), dicts) for s in train_scores]
        else:
            encoded = plain
        train_nll, train_acc = run_epoch(model, encoded, config, adam, rng)
        record = EpochRecord(epoch, train_nll, train_acc)
        if val_encoded:
            ev = evaluate(model, val_encoded)
            record.val_nll, record.val_acc = ev.nll, ev.accuracy
        result.log.append(record)
        if progress is not None:
            progress(record)

        score = float(np.mean(record.monitored_acc))
        if score > best_acc:
            best_acc, stale = score, 0
            result.best_epoch = epoch
            result.model = Model(model.network, copy.deepcopy(model.params), dicts)
        else:
            stale += 1
        if config.stop_at_accuracy is not None and min(record.monitored_acc) >= config.stop_at_accuracy:
            break
        if config.patience and stale >= config.patience:
            break
    return result


LOG_COLUMNS = ("epoch", "train_nll", "val_nll", "val_acc_dT", "val_acc_T", "val_acc_P",
               "train_acc_dT", "train_acc_T", "train_acc_P")


def log_to_csv(log, preamble: str | None = None) -> str:
    buf = io.StringIO()
    if preamble:
        for line in preamble.splitlines():
            buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for r in log:
        val_acc = r.val_acc if r.val_acc is not None else ("",) * 3
        w.writerow([r.epoch, repr(r.train_nll), "" if r.val_nll is None else repr(r.val_nll),
                    *[repr(a) if a != "" else "" for a in val_acc], *[repr(a) for a in r.train_acc]])
    return buf.getvalue()


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
