"""The CRF normaliser and best path, checked against brute force on a toy problem."""

import itertools

import numpy as np

from myanner import crf

rng = np.random.default_rng(0)
n, t = 4, 3
e = rng.normal(0, 2, size=(n, t))
trans = crf.init_transitions(t, rng, scale=1.0)  # (t+2, t+2): the last two rows/cols are START and STOP

scores = {p: crf.score_sequence(e, trans, list(p)).item() for p in itertools.product(range(t), repeat=n)}
brute_logz = np.logaddexp.reduce(list(scores.values()))
print("forward logZ ", crf.forward_log_partition(e, trans).item())
print("enumerated   ", brute_logz)

path, score = crf.viterbi_decode(e, trans)
best = max(scores, key=scores.get)
print("viterbi", path, round(score, 6))
print("brute  ", list(best), round(scores[best], 6))

# the loss of a path is its negative log-probability
gold = list(best)
print("nll of best path", crf.crf_nll(e, trans, gold).item(), "=", brute_logz - scores[best])
