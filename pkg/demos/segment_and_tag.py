"""Segment raw Myanmar text, train a small tagger and tag a sentence."""

import numpy as np

from myanner.corpus import build_alphabets, evaluate, generate_synthetic_corpus, labels_to_spans
from myanner.model import NeuralTagger, TaggerConfig
from myanner.syllable import chars_of, segment
from myanner.train import TrainConfig, train_loop

text = "ရန်ကုန်တွင်မိုးမရွာပါ။"
syllables = segment(text)  # whitespace is never required between syllables
print(" ".join(syllables))
print(chars_of(syllables[0]))  # the code points that the char encoder sees

data = generate_synthetic_corpus(seed=3, n_sentences=600)
train, dev = data[:500], data[500:]
model = NeuralTagger(TaggerConfig(hidden_total=64, d_syl=32), build_alphabets(train), np.random.default_rng(0))

# a short run; every epoch prints so progress is visible
model, history = train_loop(train, dev, model, TrainConfig(max_epochs=15, patience=4),
                            on_epoch=lambda r: print(f"epoch {r.epoch} loss {r.loss:.3f} dev F1 {r.dev_f:.3f}"))

pred = model.predict_batch([s.tokens for s in dev])
print(evaluate(dev, pred).format_table())

sent = dev[0]
for span in labels_to_spans(model.predict(sent.tokens)):
    print(span.ne_type, "".join(sent.tokens[span.start:span.end + 1]))
