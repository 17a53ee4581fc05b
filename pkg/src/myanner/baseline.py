"""Linear-chain CRF over sparse window features, trained with the shared loop."""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import IO, Sequence

import numpy as np

from . import crf
from . import tensor as tn
from .corpus import Alphabets, LabeledSentence, build_alphabets
from .model import _group_by_length
from .syllable import segment
from .tensor import Tensor

BOS = "<s>"
EOS = "</s>"
NULL_FEATURE = 0  # row for unseen features; frozen at zero


@dataclass
class FeatureTemplate:
    offsets: tuple[int, ...] = (-2, -1, 0, 1, 2)
    cutoff: int = 3
    gazetteers: dict[str, list[list[str]]] = field(default_factory=dict)

    def __post_init__(self):
        self.offsets = tuple(int(k) for k in self.offsets)
        if not self.offsets:
            raise ValueError("at least one offset is required")
        if self.cutoff < 1:
            raise ValueError("cutoff must be at least 1")


def read_gazetteer(source: IO | str | os.PathLike) -> list[list[str]]:
    """One entry per line; entries are syllable-segmented on load."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = source.read()
    return [segment(line.strip()) for line in text.splitlines() if line.strip()]


def _gazetteer_cover(tokens: Sequence[str], entries: list[list[str]]) -> list[bool]:
    covered = [False] * len(tokens)
    for entry in entries:
        m = len(entry)
        for i in range(len(tokens) - m + 1):
            if list(tokens[i:i + m]) == entry:
                covered[i:i + m] = [True] * m
    return covered


def _feature_strings(tokens: Sequence[str], template: FeatureTemplate) -> list[list[str]]:
    n = len(tokens)
    covers = {name: _gazetteer_cover(tokens, ents) for name, ents in template.gazetteers.items()}
    out = []
    for pos in range(n):
        feats = []
        for k in template.offsets:
            j = pos + k
            tok = BOS if j < 0 else EOS if j >= n else tokens[j]
            feats.append(f"w[{k}]={tok}")
            for name, cov in covers.items():
                if 0 <= j < n and cov[j]:
                    feats.append(f"g[{k}]={name}")
        out.append(feats)
    return out


def extract_features(sentence: Sequence[str], pos: int, template: FeatureTemplate | None = None,
                     index: dict[str, int] | None = None) -> list:
    """Feature strings active at ``pos``; mapped to ids when ``index`` is given.

    Features absent from ``index`` are dropped.
    """
    if not 0 <= pos < len(sentence):
        raise IndexError(f"position {pos} outside sentence of length {len(sentence)}")
    template = template or FeatureTemplate()
    feats = _feature_strings(sentence, template)[pos]
    if index is None:
        return feats
    return [index[f] for f in feats if f in index]


def build_feature_index(train: Sequence[LabeledSentence], template: FeatureTemplate) -> list[str]:
    """Feature strings seen at least ``cutoff`` times; id 0 is reserved."""
    counts: Counter[str] = Counter()
    for s in train:
        for feats in _feature_strings(s.tokens, template):
            counts.update(feats)
    kept = sorted((f for f, c in counts.items() if c >= template.cutoff), key=lambda f: (-counts[f], f))
    return ["<null>"] + kept


class SparseCrfModel:
    kind = "sparse_crf"

    def __init__(self, template: FeatureTemplate, features: list[str], labels: list[str],
                 l2_strength: float = 0.2, decode_mask: bool = True,
                 params: dict[str, np.ndarray] | None = None):
        self.template = template
        self.features = features
        self.index = {f: i for i, f in enumerate(features)}
        self.labels = list(labels)
        self._label_ids = {lab: i for i, lab in enumerate(self.labels)}
        self.l2_strength = float(l2_strength)
        self.decode_mask = decode_mask
        self.n_train = 1
        t = len(self.labels)
        self.weights = Tensor(np.zeros((len(features), t)), requires_grad=True)
        self.transitions = Tensor(crf.init_transitions(t), requires_grad=True)
        self.mask = crf.iobes_transition_mask(self.labels)
        self._cache: dict[tuple[str, ...], np.ndarray] = {}
        if params is not None:
            self.load_parameters(params)

    def parameters(self) -> dict[str, Tensor]:
        return {"weights": self.weights, "transitions": self.transitions}

    def trainable_masks(self) -> dict[str, np.ndarray]:
        m = np.ones(self.weights.shape, dtype=bool)
        m[NULL_FEATURE] = False
        return {"weights": m, "transitions": np.ones(self.transitions.shape, dtype=bool)}

    def load_parameters(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.parameters().items():
            if name not in arrays:
                raise ValueError(f"missing parameter {name}")
            a = np.asarray(arrays[name], dtype=np.float64)
            if a.shape != p.shape:
                raise ValueError(f"parameter {name}: shape {a.shape} != {p.shape}")
            p.data = a.copy()
        if set(arrays) - set(self.parameters()):
            raise ValueError(f"unexpected parameters {sorted(set(arrays) - set(self.parameters()))}")

    def feature_ids(self, tokens: Sequence[str]) -> np.ndarray:
        """``[n, k]`` feature ids padded with the null feature."""
        key = tuple(tokens)
        hit = self._cache.get(key)
        if hit is None:
            rows = [[self.index[f] for f in feats if f in self.index] for feats in _feature_strings(tokens, self.template)]
            width = max(1, max(len(r) for r in rows))
            hit = np.full((len(rows), width), NULL_FEATURE, dtype=np.int64)
            for i, r in enumerate(rows):
                hit[i, :len(r)] = r
            self._cache[key] = hit
        return hit

    def emissions(self, token_lists: Sequence[Sequence[str]]) -> Tensor:
        """``[B, n, T]`` emission scores for equal-length token lists."""
        ids = [self.feature_ids(t) for t in token_lists]
        width = max(a.shape[1] for a in ids)
        ids = np.stack([np.pad(a, ((0, 0), (0, width - a.shape[1]))) for a in ids])
        return tn.sum_(tn.embedding_lookup(self.weights, ids, padding_idx=NULL_FEATURE), axis=2)

    def loss(self, batch: Sequence[LabeledSentence], training: bool = True, rng=None,
             unk_prob: float = 0.0) -> Tensor:
        """Mean sentence NLL plus this batch's share of the L2 penalty."""
        if not batch:
            raise ValueError("empty batch")
        total = None
        for idx in _group_by_length([s.tokens for s in batch]).values():
            group = [batch[i] for i in idx]
            gold = np.array([[self._label_index(lab) for lab in s.labels] for s in group])
            part = tn.sum_(crf.crf_nll(self.emissions([s.tokens for s in group]), self.transitions, gold))
            total = part if total is None else tn.add(total, part)
        loss = tn.scale(total, 1.0 / len(batch))
        if self.l2_strength > 0:
            w = self.weights
            penalty = tn.scale(tn.sum_(tn.mul(w, w)), self.l2_strength / self.n_train)
            loss = tn.add(loss, penalty)
        return loss

    def _label_index(self, lab: str) -> int:
        try:
            return self._label_ids[lab]
        except KeyError:
            raise ValueError(f"unknown label {lab!r}") from None

    def predict_batch(self, token_lists: Sequence[Sequence[str]]) -> list[list[str]]:
        out: list[list[str] | None] = [None] * len(token_lists)
        mask = self.mask if self.decode_mask else None
        with tn.no_grad():
            for n, idx in _group_by_length(token_lists).items():
                if n == 0:
                    for i in idx:
                        out[i] = []
                    continue
                e = self.emissions([token_lists[i] for i in idx]).data
                for row, i in zip(e, idx):
                    path, _ = crf.viterbi_decode(row, self.transitions.data, mask)
                    out[i] = [self.labels[k] for k in path]
        return out

    def predict(self, tokens: Sequence[str]) -> list[str]:
        return self.predict_batch([list(tokens)])[0]

    def header(self) -> dict:
        return {
            "kind": self.kind,
            "template": asdict(self.template),
            "features": self.features,
            "labels": self.labels,
            "l2_strength": self.l2_strength,
            "decode_mask": self.decode_mask,
        }


def baseline_emissions(sentence: Sequence[str], m: SparseCrfModel) -> np.ndarray:
    if not sentence:
        return np.zeros((0, len(m.labels)))
    with tn.no_grad():
        return m.emissions([sentence]).data[0]


def build_baseline(train: Sequence[LabeledSentence], template: FeatureTemplate | None = None,
                   c: float = 2.5, l2_strength: float | None = None,
                   alphabets: Alphabets | None = None) -> SparseCrfModel:
    """Untrained model with features and labels collected from ``train``.

    The toolkit-style hyperparameter ``c`` maps to L2 strength ``1/(2c)``.
    """
    if not train:
        raise ValueError("training set must be non-empty")
    template = template or FeatureTemplate()
    if l2_strength is None:
        if c <= 0:
            raise ValueError("c must be positive")
        l2_strength = 1.0 / (2.0 * c)
    alphabets = alphabets or build_alphabets(train)
    model = SparseCrfModel(template, build_feature_index(train, template), alphabets.labels, l2_strength)
    model.n_train = len(train)
    return model


def baseline_train(train: Sequence[LabeledSentence], dev: Sequence[LabeledSentence],
                   l2_strength: float | None = None, optimizer=None, template: FeatureTemplate | None = None,
                   c: float = 2.5, rng: np.random.Generator | None = None):
    """Fit a :class:`SparseCrfModel`; ``optimizer`` is a :class:`TrainConfig`.

    Returns ``(model, history)``.
    """
    from .train import TrainConfig, train_loop

    if not train or not dev:
        raise ValueError("training and development sets must be non-empty")
    cfg = optimizer or TrainConfig(optimizer="adam", lr=0.05, max_epochs=30, patience=5, singleton_unk=0.0)
    model = build_baseline(train, template, c=c, l2_strength=l2_strength)
    return train_loop(train, dev, model, cfg, rng=rng)
