"""Neural building blocks on top of :mod:`myanner.tensor`.

All sequence layers take batches of equal-length sequences, ``[B, n, d]``;
single sequences ``[n, d]`` are accepted and returned unbatched.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import tensor as tn
from .corpus import PAD_ID
from .tensor import Tensor


def uniform_init(rng: np.random.Generator, shape, fan: int | None = None) -> np.ndarray:
    """uniform(-sqrt(3/d), sqrt(3/d)) with ``d`` the last dimension unless given."""
    d = fan if fan is not None else shape[-1]
    bound = np.sqrt(3.0 / d)
    return rng.uniform(-bound, bound, size=shape)


class ParamGroup:
    """Dataclass mixin exposing its Tensor fields by name."""

    def parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, Tensor):
                out[prefix + f.name] = v
            elif isinstance(v, ParamGroup):
                out.update(v.parameters(prefix + f.name + "."))
        return out


def _param(data, name=None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


@dataclass
class LstmCellParams(ParamGroup):
    W_xi: Tensor
    W_xf: Tensor
    W_xo: Tensor
    W_xc: Tensor
    W_hi: Tensor
    W_hf: Tensor
    W_ho: Tensor
    W_hc: Tensor
    b_i: Tensor
    b_f: Tensor
    b_o: Tensor
    b_c: Tensor

    @classmethod
    def init(cls, d_in: int, d_h: int, rng: np.random.Generator, forget_bias: float = 1.0):
        w = {f"W_x{g}": _param(uniform_init(rng, (d_in, d_h), fan=d_in)) for g in "ifoc"}
        w.update({f"W_h{g}": _param(uniform_init(rng, (d_h, d_h), fan=d_h)) for g in "ifoc"})
        b = {f"b_{g}": _param(np.zeros(d_h)) for g in "ioc"}
        b["b_f"] = _param(np.full(d_h, forget_bias))
        return cls(**w, **b)

    @classmethod
    def zeros(cls, d_in: int, d_h: int):
        w = {f"W_x{g}": _param(np.zeros((d_in, d_h))) for g in "ifoc"}
        w.update({f"W_h{g}": _param(np.zeros((d_h, d_h))) for g in "ifoc"})
        w.update({f"b_{g}": _param(np.zeros(d_h)) for g in "ifoc"})
        return cls(**w)

    @property
    def d_in(self) -> int:
        return self.W_xi.shape[0]

    @property
    def d_h(self) -> int:
        return self.W_xi.shape[1]


@dataclass
class CharCnnParams(ParamGroup):
    filters: Tensor  # [n_filters, window, d_char]
    bias: Tensor  # [n_filters]

    @classmethod
    def init(cls, n_filters: int, window: int, d_char: int, rng: np.random.Generator):
        if window % 2 == 0 or n_filters < 1:
            raise ValueError("char CNN needs an odd window and at least one filter")
        w = uniform_init(rng, (n_filters, window, d_char), fan=window * d_char)
        return cls(_param(w), _param(np.zeros(n_filters)))

    @property
    def window(self) -> int:
        return self.filters.shape[1]


def _as_2d(x: Tensor) -> tuple[Tensor, bool]:
    x = tn.as_tensor(x)
    return (tn.reshape(x, (1,) + x.shape), True) if x.ndim == 1 else (x, False)


def lstm_cell(x_t, h_prev, c_prev, p: LstmCellParams) -> tuple[Tensor, Tensor]:
    """One LSTM step; inputs are ``[d]`` vectors or ``[B, d]`` batches."""
    x, single = _as_2d(x_t)
    h, _ = _as_2d(h_prev)
    c, _ = _as_2d(c_prev)
    if x.shape[1] != p.d_in or h.shape[1] != p.d_h or c.shape[1] != p.d_h:
        raise ValueError("lstm_cell: input shapes do not match the cell parameters")

    def affine(wx, wh, b):
        return tn.add(tn.add(tn.matmul(x, wx), tn.matmul(h, wh)), b)

    i = tn.sigmoid(affine(p.W_xi, p.W_hi, p.b_i))
    f = tn.sigmoid(affine(p.W_xf, p.W_hf, p.b_f))
    o = tn.sigmoid(affine(p.W_xo, p.W_ho, p.b_o))
    cand = tn.tanh(affine(p.W_xc, p.W_hc, p.b_c))
    c_t = tn.add(tn.mul(f, c), tn.mul(i, cand))
    h_t = tn.mul(o, tn.tanh(c_t))
    if single:
        return tn.reshape(h_t, (p.d_h,)), tn.reshape(c_t, (p.d_h,))
    return h_t, c_t


def lstm_sequence(xs: Tensor, p: LstmCellParams) -> list[Tensor]:
    """Run a cell left to right over ``[B, n, d_in]``; returns ``n`` states ``[B, d_h]``.

    The four gate projections are fused into single matmuls; the arithmetic
    is identical to repeated :func:`lstm_cell` calls from zero state.
    """
    b, n, d_in = xs.shape
    d_h = p.d_h
    wx = tn.concat([p.W_xi, p.W_xf, p.W_xo, p.W_xc], axis=1)
    wh = tn.concat([p.W_hi, p.W_hf, p.W_ho, p.W_hc], axis=1)
    bias = tn.concat([p.b_i, p.b_f, p.b_o, p.b_c], axis=0)
    proj = tn.reshape(tn.add(tn.matmul(tn.reshape(xs, (b * n, d_in)), wx), bias), (b, n, 4 * d_h))
    h = c = None
    out = []
    for t in range(n):
        z = proj[:, t, :]
        if h is not None:
            z = tn.add(z, tn.matmul(h, wh))
        gates = tn.sigmoid(z[:, : 3 * d_h])
        i = gates[:, :d_h]
        o = gates[:, 2 * d_h:]
        cand = tn.tanh(z[:, 3 * d_h:])
        if c is None:
            c = tn.mul(i, cand)
        else:
            c = tn.add(tn.mul(gates[:, d_h: 2 * d_h], c), tn.mul(i, cand))
        h = tn.mul(o, tn.tanh(c))
        out.append(h)
    return out


def bilstm(xs, fwd: LstmCellParams, bwd: LstmCellParams) -> Tensor:
    """Concatenated forward and backward hidden states, ``[B, n, 2 d_h]``.

    The backward cell reads the sequence in reverse; both start from zero.
    """
    x = tn.as_tensor(xs)
    single = x.ndim == 2
    if single:
        x = tn.reshape(x, (1,) + x.shape)
    if x.shape[1] == 0:
        raise ValueError("bilstm over an empty sequence")
    hf = lstm_sequence(x, fwd)
    hb = lstm_sequence(x[:, ::-1, :], bwd)[::-1]
    out = tn.concat([tn.stack(hf, axis=1), tn.stack(hb, axis=1)], axis=2)
    return tn.reshape(out, out.shape[1:]) if single else out


def pad_chars(char_ids: list[list[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Right-pad with ``PAD_ID``; returns ids ``[N, L]`` and lengths ``[N]``."""
    if not char_ids or any(len(c) == 0 for c in char_ids):
        raise ValueError("every syllable needs at least one character")
    lengths = np.array([len(c) for c in char_ids])
    ids = np.full((len(char_ids), lengths.max()), PAD_ID, dtype=np.int64)
    for k, c in enumerate(char_ids):
        ids[k, : len(c)] = c
    return ids, lengths


def char_cnn_encode(char_ids, lengths, emb: Tensor, p: CharCnnParams) -> Tensor:
    """Convolution over zero-padded char embeddings, then max over positions.

    ``char_ids`` is ``[N, L]`` (PAD right-padded) or one flat list of ids.
    Returns ``[N, n_filters]`` (or ``[n_filters]`` for a flat list).
    """
    single = lengths is None
    if single:
        char_ids, lengths = pad_chars([list(char_ids)])
    char_ids = np.asarray(char_ids, dtype=np.int64)
    lengths = np.asarray(lengths)
    n, length = char_ids.shape
    nf, w, dc = p.filters.shape
    half = w // 2
    padded = np.pad(char_ids, ((0, 0), (half, half)), constant_values=PAD_ID)
    windows = padded[:, np.arange(length)[:, None] + np.arange(w)[None, :]]  # [N, L, w]
    cols = tn.reshape(tn.embedding_lookup(emb, windows, padding_idx=PAD_ID), (n * length, w * dc))
    kernel = tn.transpose(tn.reshape(p.filters, (nf, w * dc)))
    conv = tn.reshape(tn.add(tn.matmul(cols, kernel), p.bias), (n, length, nf))
    if length > lengths.min():
        # positions past a syllable's end are not part of its convolution
        invalid = np.arange(length)[None, :] >= lengths[:, None]
        penalty = np.where(invalid, -1e9, 0.0)[:, :, None].repeat(nf, axis=2)
        conv = tn.add(conv, Tensor(penalty))
    out = tn.max_(conv, axis=1)
    return tn.reshape(out, (nf,)) if single else out


def _final_states(states: list[Tensor], lengths: np.ndarray) -> Tensor:
    stacked = tn.stack(states, axis=1)  # [N, L, d]
    return stacked[np.arange(len(lengths)), np.asarray(lengths) - 1, :]


def char_bilstm_encode(char_ids, lengths, emb: Tensor, fwd: LstmCellParams, bwd: LstmCellParams) -> Tensor:
    """Final forward state concatenated with final backward state, ``[N, 2 d_hc]``."""
    single = lengths is None
    if single:
        char_ids, lengths = pad_chars([list(char_ids)])
    char_ids = np.asarray(char_ids, dtype=np.int64)
    lengths = np.asarray(lengths)
    n, length = char_ids.shape
    rev = np.full_like(char_ids, PAD_ID)
    for k in range(n):
        rev[k, : lengths[k]] = char_ids[k, : lengths[k]][::-1]
    hf = _final_states(lstm_sequence(tn.embedding_lookup(emb, char_ids, padding_idx=PAD_ID), fwd), lengths)
    hb = _final_states(lstm_sequence(tn.embedding_lookup(emb, rev, padding_idx=PAD_ID), bwd), lengths)
    out = tn.concat([hf, hb], axis=1)
    return tn.reshape(out, (out.shape[1],)) if single else out


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """``x @ w + b`` over the last axis of ``x``."""
    lead = x.shape[:-1]
    flat = tn.reshape(x, (int(np.prod(lead)), x.shape[-1]))
    return tn.reshape(tn.add(tn.matmul(flat, w), b), lead + (w.shape[1],))


@dataclass
class CharEncoder(ParamGroup):
    """Character embedding table plus a CNN or BiLSTM encoder over it."""

    kind: str
    emb: Tensor
    cnn: CharCnnParams | None = None
    fwd: LstmCellParams | None = None
    bwd: LstmCellParams | None = None
    dropout: float = 0.0

    @classmethod
    def init(cls, kind: str, n_chars: int, d_char: int, rng: np.random.Generator,
             n_filters: int = 50, window: int = 3, hidden_total: int = 50, dropout: float = 0.0):
        table = uniform_init(rng, (n_chars, d_char))
        table[PAD_ID] = 0.0
        emb = _param(table)
        if kind == "cnn":
            return cls(kind, emb, cnn=CharCnnParams.init(n_filters, window, d_char, rng), dropout=dropout)
        if kind == "lstm":
            if hidden_total % 2:
                raise ValueError("char BiLSTM hidden size must be even")
            d = hidden_total // 2
            return cls(kind, emb, fwd=LstmCellParams.init(d_char, d, rng),
                       bwd=LstmCellParams.init(d_char, d, rng), dropout=dropout)
        raise ValueError(f"unknown char encoder {kind!r}")

    @property
    def dim(self) -> int:
        if self.kind == "cnn":
            return self.cnn.filters.shape[0]
        return 2 * self.fwd.d_h

    def encode(self, char_ids, lengths, training: bool = False, rng=None) -> Tensor:
        emb = self.emb
        if self.dropout and training:
            emb = tn.dropout(emb, self.dropout, training, rng)
        if self.kind == "cnn":
            return char_cnn_encode(char_ids, lengths, emb, self.cnn)
        return char_bilstm_encode(char_ids, lengths, emb, self.fwd, self.bwd)


def build_input_repr(syl_ids, char_ids, char_lengths, syl_emb: Tensor, char_encoder: CharEncoder | None,
                     dropout_p: float, training: bool, rng=None) -> Tensor:
    """Syllable embedding concatenated with char features, then dropout.

    ``syl_ids`` is ``[B, n]``; ``char_ids``/``char_lengths`` cover the
    ``B * n`` syllables in row-major order.  Returns ``[B, n, d_in]``.
    """
    syl_ids = np.asarray(syl_ids, dtype=np.int64)
    b, n = syl_ids.shape
    x = tn.embedding_lookup(syl_emb, syl_ids, padding_idx=PAD_ID)
    if char_encoder is not None:
        feats = char_encoder.encode(char_ids, char_lengths, training, rng)
        x = tn.concat([x, tn.reshape(feats, (b, n, char_encoder.dim))], axis=2)
    return tn.dropout(x, dropout_p, training, rng)
