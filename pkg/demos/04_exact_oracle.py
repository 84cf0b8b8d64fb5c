"""
Checking Monte Carlo against exact enumeration
==============================================

For a three-token vocabulary and short sequences every outcome can be
listed, which gives exact values for the sequence entropy and for the
expected information density.
"""

from typicality.metrics import enumerate_exact, expected_id
from typicality.model import CallableModel, train

# tokens 0 and 1 plus an end token 2
model = train([[0, 1, 0, 2], [1, 1, 2], [0, 2], [1, 0, 0, 1, 2]],
              order=2, vocab_size=3, eos=2)

exact = enumerate_exact(model, max_len=4)
print(f"{exact.n_sequences} sequences, mass {exact.mass:.15f}")
print(f"H(x) = {exact.entropy:.5f} nats, E[ID] = {exact.expected_id:.5f}")

for m in (100, 10_000, 100_000):
    mc, se = expected_id(model, n_samples=m, max_len=4, seed=0)
    print(f"M={m:>7}: {mc:.5f} +/- {se:.5f}")

# i.i.d. fair coin flips of length 2: entropy is exactly 2 ln 2
coin = CallableModel(2, lambda ctx: [0.5, 0.5])
print(enumerate_exact(coin, max_len=2, eos=None).entropy)
