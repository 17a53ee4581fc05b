"""Linear-chain CRF: path scores, log-partition, NLL and Viterbi decoding.

Transition matrices are ``(T + 2) x (T + 2)`` with ``START = T`` and
``STOP = T + 1``; entry ``[i, j]`` scores the move from tag ``i`` to tag ``j``.
Emissions are ``[n, T]`` for one sentence or ``[B, n, T]`` for a batch of
equal-length sentences.
"""

from __future__ import annotations

import numpy as np

from . import tensor as tn
from .tensor import Tensor

IMPOSSIBLE = -1e4


def start_index(n_tags: int) -> int:
    return n_tags


def stop_index(n_tags: int) -> int:
    return n_tags + 1


def init_transitions(n_tags: int, rng: np.random.Generator | None = None, scale: float = 0.0) -> np.ndarray:
    """Transition matrix with unusable START-in / STOP-out entries."""
    k = n_tags + 2
    trans = np.zeros((k, k)) if rng is None or scale == 0 else rng.uniform(-scale, scale, (k, k))
    trans[:, start_index(n_tags)] = IMPOSSIBLE
    trans[stop_index(n_tags), :] = IMPOSSIBLE
    return trans


def _batched(emissions: Tensor, tags=None):
    e = tn.as_tensor(emissions)
    if e.ndim == 2:
        e = tn.reshape(e, (1,) + e.shape)
        if tags is not None:
            tags = np.asarray(tags, dtype=np.int64)[None, :]
        return e, tags, True
    if tags is not None:
        tags = np.asarray(tags, dtype=np.int64)
    return e, tags, False


def _check_tags(tags: np.ndarray, shape: tuple[int, int], n_tags: int) -> None:
    if tags.shape != shape:
        raise ValueError(f"tag sequence shape {tags.shape} does not match emissions {shape}")
    if tags.size and (tags.min() < 0 or tags.max() >= n_tags):
        raise ValueError(f"tag ids must lie in [0, {n_tags})")


def score_sequence(emissions, transitions, tags) -> Tensor:
    """Score of tag path(s): emissions plus START, inner and STOP transitions."""
    e, tags, single = _batched(emissions, tags)
    trans = tn.as_tensor(transitions)
    b, n, t = e.shape
    _check_tags(tags, (b, n), t)
    rows = np.repeat(np.arange(b), n)
    cols = np.tile(np.arange(n), b)
    emit = tn.sum_(tn.reshape(e[rows, cols, tags.reshape(-1)], (b, n)), axis=1)
    prev = np.concatenate([np.full((b, 1), start_index(t)), tags], axis=1)
    nxt = np.concatenate([tags, np.full((b, 1), stop_index(t))], axis=1)
    move = tn.sum_(tn.reshape(trans[prev.reshape(-1), nxt.reshape(-1)], (b, n + 1)), axis=1)
    total = emit + move
    return tn.reshape(total, ()) if single else total


def forward_log_partition(emissions, transitions) -> Tensor:
    """log of the summed exp-score over all tag paths (forward algorithm)."""
    e, _, single = _batched(emissions)
    trans = tn.as_tensor(transitions)
    b, n, t = e.shape
    if n == 0:
        raise ValueError("empty sentence")
    inner = trans[:t, :t]
    alpha = tn.add(e[:, 0, :], trans[start_index(t), :t])
    for i in range(1, n):
        expanded = tn.broadcast_to(tn.reshape(alpha, (b, t, 1)), (b, t, t))
        alpha = tn.add(tn.log_sum_exp(tn.add(expanded, inner), axis=1), e[:, i, :])
    log_z = tn.log_sum_exp(tn.add(alpha, trans[:t, stop_index(t)]), axis=1)
    return tn.reshape(log_z, ()) if single else log_z


def crf_nll(emissions, transitions, gold) -> Tensor:
    """Negative log-likelihood of ``gold``: log-partition minus gold score."""
    return tn.sub(forward_log_partition(emissions, transitions), score_sequence(emissions, transitions, gold))


def viterbi_decode(emissions, transitions, mask: np.ndarray | None = None) -> tuple[list[int], float]:
    """Best tag path for one sentence and its (unmasked) score.

    The score is the running left-to-right sum START->y0, e0, y0->y1, e1, ...,
    y[n-1]->STOP, the same order the recursion accumulates in, so it is
    reproducible bit for bit.  Ties go to the lowest tag id.  ``mask`` is a boolean allowed-transition
    matrix; disallowed moves get ``IMPOSSIBLE`` added before decoding.
    """
    e = emissions.data if isinstance(emissions, Tensor) else np.asarray(emissions, dtype=np.float64)
    trans = transitions.data if isinstance(transitions, Tensor) else np.asarray(transitions, dtype=np.float64)
    n, t = e.shape
    if n == 0:
        return [], 0.0
    eff = trans if mask is None else trans + np.where(mask, 0.0, IMPOSSIBLE)
    inner = eff[:t, :t]
    delta = eff[start_index(t), :t] + e[0]
    back = np.empty((n, t), dtype=np.int64)
    for i in range(1, n):
        cand = delta[:, None] + inner
        back[i] = cand.argmax(axis=0)
        delta = cand[back[i], np.arange(t)] + e[i]
    last = int(np.argmax(delta + eff[:t, stop_index(t)]))
    path = [last]
    for i in range(n - 1, 0, -1):
        path.append(int(back[i, path[-1]]))
    path.reverse()
    score = trans[start_index(t), path[0]] + e[0, path[0]]
    for i in range(1, n):
        score = score + trans[path[i - 1], path[i]]
        score = score + e[i, path[i]]
    return path, float(score + trans[path[-1], stop_index(t)])


def parse_label(label: str) -> tuple[str, str | None]:
    if label == "O":
        return "O", None
    prefix, sep, typ = label.partition("-")
    if not sep or prefix not in {"B", "I", "E", "S"} or not typ:
        raise ValueError(f"unparseable label {label!r}")
    return prefix, typ


def iobes_transition_mask(labels: list[str]) -> np.ndarray:
    """Allowed-transition matrix for IOBES label sequences."""
    t = len(labels)
    parsed = [parse_label(lab) for lab in labels]
    allowed = np.zeros((t + 2, t + 2), dtype=bool)
    closed_from = [i for i, (p, _) in enumerate(parsed) if p in {"O", "E", "S"}] + [start_index(t)]
    openers = [j for j, (p, _) in enumerate(parsed) if p in {"O", "B", "S"}]
    for i in closed_from:
        allowed[i, openers] = True
        if i != start_index(t):
            allowed[i, stop_index(t)] = True
    for i, (p, typ) in enumerate(parsed):
        if p in {"B", "I"}:
            for j, (q, typ2) in enumerate(parsed):
                if q in {"I", "E"} and typ2 == typ:
                    allowed[i, j] = True
    return allowed
