"""Sparse window-feature CRF against the neural tagger on the same synthetic split.

Takes several minutes on a laptop CPU.
"""

import numpy as np

from myanner.baseline import baseline_train
from myanner.corpus import build_alphabets, generate_synthetic_corpus
from myanner.model import NeuralTagger, TaggerConfig
from myanner.train import TrainConfig, train_loop

data = generate_synthetic_corpus(seed=7, n_sentences=2200)
train, dev = data[:2000], data[2000:]

baseline, hist = baseline_train(train, dev)
print(f"sparse CRF: {len(baseline.features)} features, best dev F1 {max(r.dev_f for r in hist):.4f}")

for enc in ("none", "cnn"):
    model = NeuralTagger(TaggerConfig(char_encoder=enc), build_alphabets(train), np.random.default_rng(1))
    _, hist = train_loop(train, dev, model, TrainConfig(max_epochs=40, patience=8))
    print(f"BiLSTM-CRF, char encoder {enc}: best dev F1 {max(r.dev_f for r in hist):.4f}")
