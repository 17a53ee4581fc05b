"""BiLSTM taggers with softmax or CRF heads and optional char encoders."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from . import crf
from . import tensor as tn
from .corpus import PAD_ID, UNK_ID, Alphabets, LabeledSentence
from .layers import CharEncoder, LstmCellParams, bilstm, build_input_repr, linear, pad_chars, uniform_init
from .tensor import Tensor

CHAR_ENCODERS = ("none", "cnn", "lstm")
HEADS = ("softmax", "crf")


@dataclass
class TaggerConfig:
    char_encoder: str = "cnn"
    head: str = "crf"
    d_syl: int = 100
    d_char: int = 100
    n_filters: int = 50
    window: int = 3
    char_hidden_total: int = 50
    hidden_total: int = 200
    dropout: float = 0.5
    char_dropout: float = 0.0
    decode_mask: bool = True
    train_mask: bool = False

    def __post_init__(self):
        if self.char_encoder not in CHAR_ENCODERS:
            raise ValueError(f"char_encoder must be one of {CHAR_ENCODERS}, got {self.char_encoder!r}")
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got {self.head!r}")
        for name in ("d_syl", "d_char", "n_filters", "window", "char_hidden_total", "hidden_total"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.hidden_total % 2 or self.char_hidden_total % 2:
            raise ValueError("hidden sizes must be even (split across two directions)")
        if self.window % 2 == 0:
            raise ValueError("window must be odd")
        if not 0.0 <= self.dropout < 1.0 or not 0.0 <= self.char_dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "TaggerConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def _group_by_length(items: Sequence[Sequence[str]]) -> dict[int, list[int]]:
    groups: dict[int, list[int]] = defaultdict(list)
    for i, toks in enumerate(items):
        groups[len(toks)].append(i)
    return groups


class NeuralTagger:
    """Syllable embeddings (+ char features) -> BiLSTM -> linear -> softmax or CRF."""

    kind = "neural"

    def __init__(self, config: TaggerConfig, alphabets: Alphabets, rng: np.random.Generator | None = None,
                 params: dict[str, np.ndarray] | None = None):
        self.config = config
        self.alphabets = alphabets
        rng = rng if rng is not None else np.random.default_rng(0)
        cfg = config
        n_tags = len(alphabets.labels)
        table = uniform_init(rng, (len(alphabets.syllables), cfg.d_syl))
        table[PAD_ID] = 0.0
        self.syl_emb = Tensor(table, requires_grad=True)
        self.char_encoder = None
        d_in = cfg.d_syl
        if cfg.char_encoder != "none":
            self.char_encoder = CharEncoder.init(
                cfg.char_encoder, len(alphabets.chars), cfg.d_char, rng, n_filters=cfg.n_filters,
                window=cfg.window, hidden_total=cfg.char_hidden_total, dropout=cfg.char_dropout)
            d_in += self.char_encoder.dim
        d_h = cfg.hidden_total // 2
        self.fwd = LstmCellParams.init(d_in, d_h, rng)
        self.bwd = LstmCellParams.init(d_in, d_h, rng)
        self.proj_w = Tensor(uniform_init(rng, (cfg.hidden_total, n_tags), fan=cfg.hidden_total), requires_grad=True)
        self.proj_b = Tensor(np.zeros(n_tags), requires_grad=True)
        self.transitions = Tensor(crf.init_transitions(n_tags), requires_grad=True) if cfg.head == "crf" else None
        self.mask = crf.iobes_transition_mask(alphabets.labels) if cfg.head == "crf" else None
        vocab = alphabets.syllables
        self._singletons = np.array([vocab.counts.get(t, 0) == 1 for t in vocab.itos])
        self._cache: dict[tuple[str, ...], tuple[np.ndarray, list[list[int]]]] = {}
        if params is not None:
            self.load_parameters(params)

    @property
    def d_in(self) -> int:
        return self.fwd.d_in

    def parameters(self) -> dict[str, Tensor]:
        out = {"syl_emb": self.syl_emb}
        if self.char_encoder is not None:
            out.update(self.char_encoder.parameters("char."))
        out.update(self.fwd.parameters("fwd."))
        out.update(self.bwd.parameters("bwd."))
        out["proj_w"] = self.proj_w
        out["proj_b"] = self.proj_b
        if self.transitions is not None:
            out["transitions"] = self.transitions
        return out

    def trainable_masks(self) -> dict[str, np.ndarray]:
        """True where a coordinate is trainable; padding rows are frozen at zero."""
        out = {}
        for name, p in self.parameters().items():
            m = np.ones(p.shape, dtype=bool)
            if name in ("syl_emb", "char.emb"):
                m[PAD_ID] = False
            out[name] = m
        return out

    def load_parameters(self, arrays: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        if set(arrays) != set(params):
            missing = sorted(set(params) ^ set(arrays))
            raise ValueError(f"parameter names do not match the model: {missing[:5]}")
        for name, p in params.items():
            a = np.asarray(arrays[name], dtype=np.float64)
            if a.shape != p.shape:
                raise ValueError(f"parameter {name}: shape {a.shape} != {p.shape}")
            p.data = a.copy()

    # ------------------------------------------------------------------ inputs

    def _featurize(self, tokens: Sequence[str]):
        key = tuple(tokens)
        hit = self._cache.get(key)
        if hit is None:
            syl = np.array(self.alphabets.syllables.indices(tokens), dtype=np.int64)
            chars = [self.alphabets.chars.indices(t) for t in tokens]
            hit = (syl, chars)
            self._cache[key] = hit
        return hit

    def _arrays(self, token_lists, unk_prob: float = 0.0, rng=None):
        feats = [self._featurize(t) for t in token_lists]
        syl = np.stack([f[0] for f in feats])
        if unk_prob > 0.0:
            drop = self._singletons[syl] & (rng.random(syl.shape) < unk_prob)
            syl = np.where(drop, UNK_ID, syl)
        char_ids = lengths = None
        if self.char_encoder is not None:
            char_ids, lengths = pad_chars([c for f in feats for c in f[1]])
        return syl, char_ids, lengths

    def emissions(self, token_lists: Sequence[Sequence[str]], training: bool = False, rng=None,
                  unk_prob: float = 0.0) -> Tensor:
        """Emission scores ``[B, n, T]`` for equal-length token lists."""
        syl, char_ids, lengths = self._arrays(token_lists, unk_prob if training else 0.0, rng)
        x = build_input_repr(syl, char_ids, lengths, self.syl_emb, self.char_encoder,
                             self.config.dropout, training, rng)
        h = tn.dropout(bilstm(x, self.fwd, self.bwd), self.config.dropout, training, rng)
        return linear(h, self.proj_w, self.proj_b)

    def _train_transitions(self) -> Tensor:
        if self.config.train_mask:
            return tn.add(self.transitions, Tensor(np.where(self.mask, 0.0, crf.IMPOSSIBLE)))
        return self.transitions

    # -------------------------------------------------------------------- loss

    def loss(self, batch: Sequence[LabeledSentence], training: bool = True, rng=None,
             unk_prob: float = 0.0) -> Tensor:
        """Mean per-sentence loss (CRF NLL or summed token cross-entropy)."""
        if not batch:
            raise ValueError("empty batch")
        total = None
        for idx in _group_by_length([s.tokens for s in batch]).values():
            group = [batch[i] for i in idx]
            gold = np.array([[self.alphabets.label_index(lab) for lab in s.labels] for s in group])
            e = self.emissions([s.tokens for s in group], training, rng, unk_prob)
            part = tn.sum_(self._sentence_losses(e, gold))
            total = part if total is None else tn.add(total, part)
        return tn.scale(total, 1.0 / len(batch))

    def _sentence_losses(self, e: Tensor, gold: np.ndarray) -> Tensor:
        if self.config.head == "crf":
            return crf.crf_nll(e, self._train_transitions(), gold)
        b, n, t = e.shape
        lse = tn.log_sum_exp(e, axis=2)
        picked = tn.reshape(e[np.repeat(np.arange(b), n), np.tile(np.arange(n), b), gold.reshape(-1)], (b, n))
        return tn.sum_(tn.sub(lse, picked), axis=1)

    # ----------------------------------------------------------------- predict

    def predict_batch(self, token_lists: Sequence[Sequence[str]]) -> list[list[str]]:
        out: list[list[str] | None] = [None] * len(token_lists)
        labels = self.alphabets.labels
        with tn.no_grad():
            for n, idx in _group_by_length(token_lists).items():
                if n == 0:
                    for i in idx:
                        out[i] = []
                    continue
                e = self.emissions([token_lists[i] for i in idx]).data
                for row, i in zip(e, idx):
                    if self.config.head == "crf":
                        mask = self.mask if self.config.decode_mask else None
                        path, _ = crf.viterbi_decode(row, self.transitions.data, mask)
                    else:
                        path = row.argmax(axis=1).tolist()
                    out[i] = [labels[k] for k in path]
        return out

    def predict(self, tokens: Sequence[str]) -> list[str]:
        return self.predict_batch([list(tokens)])[0]

    # ------------------------------------------------------------------ header

    def header(self) -> dict:
        a = self.alphabets
        return {
            "kind": self.kind,
            "config": asdict(self.config),
            "syllables": a.syllables.itos,
            "chars": a.chars.itos,
            "labels": a.labels,
        }


def neural_forward_loss(batch: Sequence[LabeledSentence], model: NeuralTagger, training: bool = True,
                        rng=None) -> Tensor:
    return model.loss(batch, training=training, rng=rng)


def predict(sentence: Sequence[str], model) -> list[str]:
    return model.predict(sentence)
