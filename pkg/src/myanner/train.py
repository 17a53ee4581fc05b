"""Optimizers, learning-rate schedule, batching, early stopping and the epoch loop."""

from __future__ import annotations

import csv
import io
import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields
from typing import IO, Protocol, Sequence

import numpy as np

from . import tensor as tn
from .corpus import PAD_ID, UNK_ID, LabeledSentence, Vocab, evaluate
from .tensor import Tensor

log = logging.getLogger(__name__)

DEFAULT_LR = {"sgd": 0.015, "adam": 0.0015}


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    lr: float | None = None
    momentum: float = 0.1
    lr_decay: float = 0.05
    batch_size: int = 30
    max_epochs: int = 100
    patience: int = 10
    grad_clip: float = 5.0
    singleton_unk: float = 0.5
    seed: int = 1

    def __post_init__(self):
        if self.optimizer not in DEFAULT_LR:
            raise ValueError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if self.lr is None:
            self.lr = DEFAULT_LR[self.optimizer]
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 1:
            raise ValueError("batch_size, patience and max_epochs must be at least 1")
        if self.grad_clip < 0 or self.lr_decay < 0:
            raise ValueError("grad_clip and lr_decay must be non-negative")


# ----------------------------------------------------------------------------
# optimizers


@dataclass
class OptimState:
    velocity: dict[str, np.ndarray] = field(default_factory=dict)
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def _check_aligned(params: dict[str, Tensor], grads: dict[str, np.ndarray]) -> None:
    for name, p in params.items():
        g = grads.get(name)
        if g is not None and g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")


def sgd_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: OptimState, lr: float,
             momentum: float = 0.1) -> dict[str, Tensor]:
    """``v <- momentum * v + g``; ``p <- p - lr * v`` (in place)."""
    _check_aligned(params, grads)
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        v = state.velocity.get(name)
        v = g.copy() if v is None else momentum * v + g
        state.velocity[name] = v
        p.data -= lr * v
    return params


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: OptimState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> dict[str, Tensor]:
    """Bias-corrected Adam update (in place)."""
    _check_aligned(params, grads)
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1 - beta1) * g if m is None else beta1 * m + (1 - beta1) * g
        v = (1 - beta2) * g * g if v is None else beta2 * v + (1 - beta2) * g * g
        state.m[name], state.v[name] = m, v
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params


def lr_schedule(lr0: float, decay: float, epoch: int) -> float:
    return lr0 / (1.0 + decay * epoch)


def clip_gradients(grads: dict[str, np.ndarray], cap: float) -> tuple[dict[str, np.ndarray], float]:
    """Rescale so the global L2 norm is at most ``cap`` (0 disables)."""
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if cap > 0 and norm > cap:
        k = cap / norm
        return {n: g * k for n, g in grads.items()}, norm
    return grads, norm


# ----------------------------------------------------------------------------
# batching


def make_batches(sentences: Sequence[LabeledSentence], batch_size: int, rng: np.random.Generator) -> list[list[int]]:
    """Shuffle, bucket by exact length, chunk to ``batch_size``, shuffle batches."""
    order = rng.permutation(len(sentences))
    buckets: dict[int, list[int]] = {}
    for i in order:
        buckets.setdefault(len(sentences[i]), []).append(int(i))
    batches = []
    for n in sorted(buckets):
        idx = buckets[n]
        batches += [idx[k:k + batch_size] for k in range(0, len(idx), batch_size)]
    perm = rng.permutation(len(batches))
    return [batches[i] for i in perm]


# ----------------------------------------------------------------------------
# training loop


class Trainable(Protocol):
    def parameters(self) -> dict[str, Tensor]: ...

    def loss(self, batch, training: bool = True, rng=None, unk_prob: float = 0.0) -> Tensor: ...

    def predict_batch(self, token_lists) -> list[list[str]]: ...


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    dev_p: float
    dev_r: float
    dev_f: float
    lr: float


def write_history(history: Sequence[EpochRecord], sink: IO[str]) -> None:
    w = csv.writer(sink, lineterminator="\n")
    w.writerow(["epoch", "loss", "dev_p", "dev_r", "dev_f", "lr"])
    for r in history:
        w.writerow([r.epoch, repr(r.loss), repr(r.dev_p), repr(r.dev_r), repr(r.dev_f), repr(r.lr)])


def history_csv(history: Sequence[EpochRecord]) -> str:
    buf = io.StringIO()
    write_history(history, buf)
    return buf.getvalue()


def train_step(model: Trainable, batch: Sequence[LabeledSentence], cfg: TrainConfig, state: OptimState,
               lr: float, rng: np.random.Generator) -> float:
    params = model.parameters()
    for p in params.values():
        p.zero_grad()
    with tn.Tape() as tape:
        loss = model.loss(batch, training=True, rng=rng, unk_prob=cfg.singleton_unk)
        value = loss.item()
        if not math.isfinite(value):
            raise TrainingError(f"non-finite training loss {value}")
        tape.backward(loss)
    grads = {n: p.grad for n, p in params.items() if p.grad is not None}
    grads, _ = clip_gradients(grads, cfg.grad_clip)
    if cfg.optimizer == "sgd":
        sgd_step(params, grads, state, lr, cfg.momentum)
    else:
        adam_step(params, grads, state, lr)
    for p in params.values():
        p.zero_grad()
    return value


def train_loop(train: Sequence[LabeledSentence], dev: Sequence[LabeledSentence], model: Trainable,
               cfg: TrainConfig, rng: np.random.Generator | None = None,
               on_epoch=None) -> tuple[Trainable, list[EpochRecord]]:
    """Train with early stopping on dev micro-F1; returns the best model and history.

    ``model`` is updated in place and left holding the best parameters.
    ``on_epoch(record)`` runs after each epoch; a true return stops training.
    """
    if not train or not dev:
        raise ValueError("training and development sets must be non-empty")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    state = OptimState()
    history: list[EpochRecord] = []
    best_f, best_params, stale = -1.0, None, 0
    for epoch in range(cfg.max_epochs):
        lr = lr_schedule(cfg.lr, cfg.lr_decay, epoch) if cfg.optimizer == "sgd" else cfg.lr
        total = 0.0
        for k, idx in enumerate(make_batches(train, cfg.batch_size, rng)):
            try:
                total += train_step(model, [train[i] for i in idx], cfg, state, lr, rng) * len(idx)
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch}, batch {k}: {exc}") from None
        m = evaluate(dev, model.predict_batch([s.tokens for s in dev])).micro
        rec = EpochRecord(epoch, total / len(train), m.precision, m.recall, m.f1, lr)
        history.append(rec)
        log.info("epoch %d loss %.4f dev P %.4f R %.4f F %.4f", epoch, rec.loss, rec.dev_p, rec.dev_r, rec.dev_f)
        if rec.dev_f > best_f:
            best_f, stale = rec.dev_f, 0
            best_params = {n: p.data.copy() for n, p in model.parameters().items()}
        else:
            stale += 1
            if stale >= cfg.patience:
                break
        if on_epoch is not None and on_epoch(rec):
            break
    for n, p in model.parameters().items():
        p.data = best_params[n].copy()
    return model, history


# ----------------------------------------------------------------------------
# pretrained embeddings


@dataclass
class EmbeddingReport:
    found: int
    missing: int


class EmbeddingFormatError(ValueError):
    pass


def load_pretrained_embeddings(source: IO | str | os.PathLike, vocab: Vocab, dim: int,
                               rng: np.random.Generator | None = None) -> tuple[np.ndarray, EmbeddingReport]:
    """Read word2vec text vectors for the tokens of ``vocab``.

    An optional ``"<count> <dim>"`` header is accepted.  Tokens absent from
    the file are initialised uniformly in +-sqrt(3/dim); the PAD row is zero.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            text = fh.read().decode("utf-8")
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    bound = math.sqrt(3.0 / dim)
    table = rng.uniform(-bound, bound, size=(len(vocab), dim))
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.rstrip().split(" ")
        if not line.strip():
            continue
        if lineno == 1 and len(parts) == 2 and all(x.isdigit() for x in parts):
            if int(parts[1]) != dim:
                raise EmbeddingFormatError(f"file dimension {parts[1]} does not match configured {dim}")
            continue
        tok, vals = parts[0], parts[1:]
        if len(vals) != dim:
            raise EmbeddingFormatError(f"line {lineno}: {len(vals)} values, expected {dim}")
        try:
            vec = np.array([float(v) for v in vals])
        except ValueError:
            raise EmbeddingFormatError(f"line {lineno}: malformed float") from None
        if tok in vocab.stoi and vocab.stoi[tok] not in (PAD_ID, UNK_ID):
            table[vocab.stoi[tok]] = vec
            seen.add(tok)
    table[PAD_ID] = 0.0
    n_real = len(vocab) - 2  # PAD and UNK are never looked up in the file
    return table, EmbeddingReport(found=len(seen), missing=n_real - len(seen))


# ----------------------------------------------------------------------------
# key=value config files


class ConfigError(ValueError):
    pass


def _coerce(raw: str, typ):
    raw = raw.strip()
    if typ in (bool, "bool"):
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if typ in (int, "int"):
        return int(raw)
    if typ in (float, "float", "float | None"):
        return float(raw)
    return raw


def parse_config(text: str, *classes) -> dict[str, dict]:
    """Split ``key=value`` lines between dataclasses by field name.

    ``#`` starts a comment anywhere on a line.  Unknown keys raise
    :class:`ConfigError`.  Returns keyword dicts keyed by class name.
    """
    owners = {}
    for cls in classes:
        for f in fields(cls):
            owners.setdefault(f.name, (cls, f.type))
    out: dict[str, dict] = {cls.__name__: {} for cls in classes}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.partition("#")[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key=value")
        if key not in owners:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        cls, typ = owners[key]
        try:
            out[cls.__name__][key] = _coerce(value, typ)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    return out


def format_config(*objs) -> str:
    lines = []
    for obj in objs:
        for k, v in asdict(obj).items():
            lines.append(f"{k}={v}")
    return "\n".join(lines) + "\n"
