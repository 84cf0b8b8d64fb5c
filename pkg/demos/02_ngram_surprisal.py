"""
Surprisal under an n-gram model
===============================

Train the interpolated n-gram model on the toy corpus and look at how
information content and entropy evolve along one held-out melody.
"""

import numpy as np

from typicality.corpus import TEST, TRAIN, generate_toy_corpus, split
from typicality.metrics import score_events, sequence_ic
from typicality.model import train
from typicality.tokenizer import describe

corpus = generate_toy_corpus()
parts = split(corpus)
train_set = corpus.subset(p for p, s in parts.items() if s == TRAIN)
test_set = corpus.subset(p for p, s in parts.items() if s == TEST)
print(len(train_set), "training pieces,", len(test_set), "test pieces")

model = train(train_set.tokens(), order=5)

melody = test_set.tokens()[0]
ic, ent = score_events(model, melody)
print(f"{'token':>6} {'IC':>6} {'H':>6} {'H-IC':>6}")
for tok, i, h in list(zip(melody, ic, ent))[:16]:
    print(f"{describe(tok):>6} {i:6.3f} {h:6.3f} {h - i:+6.3f}")

# Duration tokens after a pitch are mostly predictable; pitches carry the surprise
print("mean IC of pitch tokens   ", ic[np.array(melody) < 128].mean())
print("mean IC of duration tokens", ic[(np.array(melody) > 128) & (np.array(melody) < 229)].mean())

# Information density is total IC divided by length
for order in (1, 3, 5):
    m = train(train_set.tokens(), order=order)
    ids = [sequence_ic(m, t).id for t in test_set.tokens()]
    print(f"order {order}: held-out mean ID {np.mean(ids):.3f} nats/token")
