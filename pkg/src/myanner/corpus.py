"""Labeled data: CoNLL I/O, IOB2/IOBES span encoding, chunk scoring, vocabularies."""

from __future__ import annotations

import io
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

NE_TYPES = ("PNAME", "LOC", "ORG", "RACE", "TIME", "NUM")
SCHEMES = ("IOB2", "IOBES")

PAD = "<pad>"
UNK = "<unk>"
PAD_ID = 0
UNK_ID = 1


class ConllFormatError(ValueError):
    def __init__(self, lineno: int, message: str):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}")


class LabelError(ValueError):
    pass


@dataclass
class LabeledSentence:
    tokens: list[str]
    labels: list[str]

    def __post_init__(self):
        if len(self.tokens) != len(self.labels):
            raise ValueError(f"{len(self.tokens)} tokens but {len(self.labels)} labels")
        if not self.tokens:
            raise ValueError("a labeled sentence needs at least one token")

    def __len__(self):
        return len(self.tokens)


@dataclass(frozen=True, order=True)
class EntitySpan:
    start: int
    end: int
    ne_type: str


@dataclass(frozen=True)
class Violation:
    index: int
    message: str


def _norm_scheme(scheme: str) -> str:
    s = scheme.upper()
    if s not in SCHEMES:
        raise ValueError(f"unknown tagging scheme {scheme!r}")
    return s


def split_label(label: str) -> tuple[str, str | None]:
    """``'B-LOC' -> ('B', 'LOC')``; ``'O' -> ('O', None)``; other shapes raise."""
    if label == "O":
        return "O", None
    prefix, sep, typ = label.partition("-")
    if not sep or prefix not in ("B", "I", "E", "S") or not typ:
        raise LabelError(f"malformed label {label!r}")
    return prefix, typ


def check_type(ne_type: str, open_tagset: bool = False) -> str:
    if not open_tagset and ne_type not in NE_TYPES:
        raise LabelError(f"unknown entity type {ne_type!r}")
    return ne_type


# ----------------------------------------------------------------------------
# CoNLL files


def parse_conll(text: str) -> list[LabeledSentence]:
    if text.startswith("\ufeff"):
        text = text[1:]
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    sentences = []
    tokens: list[str] = []
    labels: list[str] = []
    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            if tokens:
                sentences.append(LabeledSentence(tokens, labels))
                tokens, labels = [], []
            continue
        fields = line.split("\t")
        if len(fields) != 2 or not fields[0] or not fields[1]:
            raise ConllFormatError(lineno, f"expected 'SURFACE<TAB>LABEL', got {len(fields)} field(s)")
        tokens.append(fields[0])
        labels.append(fields[1])
    if tokens:
        sentences.append(LabeledSentence(tokens, labels))
    return sentences


def read_conll(source: IO | bytes | str | os.PathLike) -> list[LabeledSentence]:
    """Read two-column CoNLL data from a stream, raw bytes, or a path."""
    if isinstance(source, (bytes, bytearray)):
        return parse_conll(bytes(source).decode("utf-8"))
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return parse_conll(fh.read().decode("utf-8"))
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return parse_conll(data)


def format_conll(sentences: Iterable[LabeledSentence]) -> str:
    blocks = ["".join(f"{t}\t{lab}\n" for t, lab in zip(s.tokens, s.labels)) for s in sentences]
    return "\n".join(blocks)


def write_conll(sentences: Iterable[LabeledSentence], sink: IO | str | os.PathLike) -> None:
    data = format_conll(sentences).encode("utf-8")
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "wb") as fh:
            fh.write(data)
    elif isinstance(sink, io.TextIOBase):
        sink.write(data.decode("utf-8"))
    else:
        sink.write(data)


# ----------------------------------------------------------------------------
# span encoding


def spans_to_labels(n: int, spans: Sequence[EntitySpan], scheme: str = "IOBES") -> list[str]:
    scheme = _norm_scheme(scheme)
    labels = ["O"] * n
    last_end = -1
    for sp in sorted(spans):
        if not 0 <= sp.start <= sp.end < n:
            raise ValueError(f"span {sp} out of range for length {n}")
        if sp.start <= last_end:
            raise ValueError(f"span {sp} overlaps a previous span")
        last_end = sp.end
        if scheme == "IOBES" and sp.start == sp.end:
            labels[sp.start] = f"S-{sp.ne_type}"
            continue
        labels[sp.start] = f"B-{sp.ne_type}"
        for i in range(sp.start + 1, sp.end + 1):
            labels[i] = f"I-{sp.ne_type}"
        if scheme == "IOBES":
            labels[sp.end] = f"E-{sp.ne_type}"
    return labels


def labels_to_spans(labels: Sequence[str]) -> list[EntitySpan]:
    """Decode chunks from IOB2 or IOBES labels, repairing invalid sequences.

    A chunk opens at ``B``/``S``, or at ``I``/``E`` that does not continue an
    open chunk of the same type.  A chunk closes at ``E``/``S`` or on a type
    change; one still open at the end of the sentence closes there.
    """
    spans = []
    start = None
    cur = None

    def close(end):
        nonlocal start, cur
        if cur is not None:
            spans.append(EntitySpan(start, end, cur))
        start, cur = None, None

    for i, lab in enumerate(labels):
        prefix, typ = split_label(lab)
        if prefix == "O":
            close(i - 1)
        elif prefix == "B":
            close(i - 1)
            start, cur = i, typ
        elif prefix == "S":
            close(i - 1)
            spans.append(EntitySpan(i, i, typ))
        elif prefix == "I":
            if cur != typ:
                close(i - 1)
                start, cur = i, typ
        else:  # E
            if cur != typ:
                close(i - 1)
                start, cur = i, typ
            close(i)
    close(len(labels) - 1)
    return spans


def validate_labels(labels: Sequence[str], scheme: str = "IOBES", open_tagset: bool = False) -> list[Violation]:
    """Illegal positions under ``scheme``; index ``len(labels)`` marks an unclosed final chunk."""
    scheme = _norm_scheme(scheme)
    out = []
    prev_p, prev_t = "O", None
    for i, lab in enumerate(labels):
        try:
            p, t = split_label(lab)
            if t is not None:
                check_type(t, open_tagset)
        except LabelError as exc:
            out.append(Violation(i, str(exc)))
            prev_p, prev_t = "O", None
            continue
        if scheme == "IOB2":
            if p in ("E", "S"):
                out.append(Violation(i, f"{lab} is not an IOB2 label"))
            elif p == "I" and not (prev_p in ("B", "I") and prev_t == t):
                out.append(Violation(i, f"{lab} does not continue a {t} chunk"))
        else:
            inside = prev_p in ("B", "I")
            if inside and not (p in ("I", "E") and t == prev_t):
                out.append(Violation(i, f"{lab} interrupts an unterminated {prev_t} chunk"))
            elif not inside and p in ("I", "E"):
                out.append(Violation(i, f"{lab} without a preceding B-{t}"))
        prev_p, prev_t = p, t
    if scheme == "IOBES" and prev_p in ("B", "I"):
        out.append(Violation(len(labels), f"unterminated {prev_t} chunk at end of sentence"))
    return out


def convert_scheme(labels: Sequence[str], src: str, dst: str, strict: bool = True) -> list[str]:
    src, dst = _norm_scheme(src), _norm_scheme(dst)
    if strict:
        bad = validate_labels(labels, src, open_tagset=True)
        if bad:
            raise LabelError(f"invalid {src} labels at index {bad[0].index}: {bad[0].message}")
    return spans_to_labels(len(labels), labels_to_spans(labels), dst)


# ----------------------------------------------------------------------------
# scoring


@dataclass
class Score:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        d = self.tp + self.fp
        return self.tp / d if d else 0.0

    @property
    def recall(self) -> float:
        d = self.tp + self.fn
        return self.tp / d if d else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


@dataclass
class Metrics:
    per_type: dict[str, Score] = field(default_factory=dict)
    micro: Score = field(default_factory=Score)

    @property
    def macro(self) -> tuple[float, float, float]:
        """Unweighted mean of per-type precision, recall and F1."""
        if not self.per_type:
            return 0.0, 0.0, 0.0
        k = len(self.per_type)
        scores = self.per_type.values()
        return (
            sum(s.precision for s in scores) / k,
            sum(s.recall for s in scores) / k,
            sum(s.f1 for s in scores) / k,
        )

    def rows(self, macro: bool = False) -> list[tuple[str, float, float, float]]:
        out = [(t, s.precision, s.recall, s.f1) for t, s in sorted(self.per_type.items())]
        out.append(("micro", self.micro.precision, self.micro.recall, self.micro.f1))
        if macro:
            out.append(("macro",) + self.macro)
        return out

    def format_table(self, macro: bool = False) -> str:
        lines = ["TYPE\tP\tR\tF1"]
        for name, p, r, f in self.rows(macro):
            lines.append(f"{name}\t{100 * p:.2f}\t{100 * r:.2f}\t{100 * f:.2f}")
        return "\n".join(lines) + "\n"


def evaluate(gold: Sequence[LabeledSentence], pred: Sequence[Sequence[str]]) -> Metrics:
    """Exact-match chunk precision/recall/F1, micro-averaged over sentences."""
    if len(gold) != len(pred):
        raise ValueError(f"{len(gold)} gold sentences but {len(pred)} predictions")
    m = Metrics()
    for k, (g, p) in enumerate(zip(gold, pred)):
        if len(g.labels) != len(p):
            raise ValueError(f"sentence {k}: {len(g.labels)} gold labels but {len(p)} predicted")
        gs = set(labels_to_spans(g.labels))
        ps = set(labels_to_spans(p))
        for sp in gs | ps:
            s = m.per_type.setdefault(sp.ne_type, Score())
            if sp in gs and sp in ps:
                s.tp += 1
            elif sp in ps:
                s.fp += 1
            else:
                s.fn += 1
    for s in m.per_type.values():
        m.micro.tp += s.tp
        m.micro.fp += s.fp
        m.micro.fn += s.fn
    return m


# ----------------------------------------------------------------------------
# vocabularies


class Vocab:
    """Token <-> id map with PAD at 0 and UNK at 1."""

    def __init__(self, tokens: Iterable[str] = (), counts: Counter | None = None):
        self.itos = [PAD, UNK]
        self.stoi = {PAD: PAD_ID, UNK: UNK_ID}
        self.counts = Counter() if counts is None else Counter(counts)
        for tok in tokens:
            self.add(tok)

    def add(self, tok: str) -> int:
        if tok not in self.stoi:
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)
        return self.stoi[tok]

    def __len__(self):
        return len(self.itos)

    def __contains__(self, tok):
        return tok in self.stoi

    def index(self, tok: str) -> int:
        return self.stoi.get(tok, UNK_ID)

    def indices(self, toks: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in toks]

    def singletons(self) -> set[int]:
        return {self.stoi[t] for t, c in self.counts.items() if c == 1 and t in self.stoi}


def _label_key(label: str):
    p, t = split_label(label)
    return (t or "", "OBIES".index(p))


@dataclass
class Alphabets:
    syllables: Vocab
    chars: Vocab
    labels: list[str]

    _label_ids: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self._label_ids = {lab: i for i, lab in enumerate(self.labels)}

    def label_index(self, label: str) -> int:
        try:
            return self._label_ids[label]
        except KeyError:
            raise LabelError(f"label {label!r} not in the model's label set") from None


def build_alphabets(train: Sequence[LabeledSentence]) -> Alphabets:
    if not train:
        raise ValueError("cannot build alphabets from an empty training set")
    syl_counts = Counter(t for s in train for t in s.tokens)
    char_counts = Counter(c for s in train for t in s.tokens for c in t)
    syl = Vocab(sorted(syl_counts, key=lambda t: (-syl_counts[t], t)), syl_counts)
    chars = Vocab(sorted(char_counts, key=lambda c: (-char_counts[c], c)), char_counts)
    label_set = {lab for s in train for lab in s.labels}
    labels = sorted(label_set - {"O"}, key=_label_key)
    return Alphabets(syl, chars, ["O"] + labels)


def generate_synthetic_corpus(seed: int, n_sentences: int, min_len: int = 5, max_len: int = 25) -> list[LabeledSentence]:
    """See :func:`myanner.synth.generate_synthetic_corpus`."""
    from .synth import generate_synthetic_corpus as gen

    return gen(seed, n_sentences, min_len, max_len)
