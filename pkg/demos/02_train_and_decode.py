"""
Training the cough HMM and decoding a recording
===============================================

Samples labelled data from the built-in demo model, trains a fresh model
from the labels alone, and decodes a held-out sequence with forward
filtering (per-bin posteriors) and Viterbi (one consistent state path).
"""

import numpy as np

from coughhmm import STATE_NAMES, decode, demo_model, group_scores, sample, train, validate_labels
from coughhmm.annotations import runs

truth = demo_model("multivariate")
training = [sample(truth, 20_000, seed=s) for s in range(3)]
print("annotation violations:", sum(len(validate_labels(ls.labels)) for ls in training))

model = train(training, "multivariate")

np.set_printoptions(precision=3, suppress=True)
print("estimated transitions (rows = from, columns = to, order A..E)")
print(model.transitions)
print("generating transitions")
print(truth.transitions)

# Decode an unseen recording
test = sample(truth, 400, seed=99)
result = decode(model, test.features)
print(f"log-likelihood {result.log_likelihood:.1f}")
print("posterior argmax accuracy", np.mean(result.predicted == test.labels))
print("Viterbi accuracy        ", np.mean(result.viterbi_path == test.labels))

# Cough events are the A..C runs of the Viterbi path
cough = group_scores(result.posteriors, "cough")
events = [(a, b) for a, b, s in runs(np.isin(result.viterbi_path, [0, 1, 2])) if s]
print(f"{len(events)} coughs found in {len(test) * 0.025:.1f} s")
for a, b in events[:5]:
    print(f"  {a * 0.025:6.3f}-{b * 0.025:6.3f} s  mean cough score {cough[a:b].mean():.3f}")

start = events[0][0] - 5 if events else 0
print(f"bins {start}..{start + 39}, truth vs Viterbi:")
print("".join(STATE_NAMES[s] for s in test.labels[start : start + 40]))
print("".join(STATE_NAMES[s] for s in result.viterbi_path[start : start + 40]))
