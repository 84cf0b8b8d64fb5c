"""Conditional next-token models.

Anything with ``vocab_size``, ``eos`` and ``next_distribution(context)``
works with the sampler and the metrics. :class:`NGramModel` is the trainable
implementation: additive-1 unigram counts, recursively interpolated with
higher orders::

    q_0(v)       = (c(v) + 1) / (C + K)
    q_k(v | ctx) = (c(ctx v) + alpha * q_{k-1}(v | ctx')) / (c(ctx .) + alpha)

so every token has strictly positive probability in every context.
"""

from __future__ import annotations

import hashlib
import json
from collections import defaultdict
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Optional, Protocol, Sequence, Union

import numpy as np

from .errors import ModelLoadError, ModelVersionError, TrainingError
from .tokenizer import EOS, VOCAB_SIZE

PAD = -1
MAGIC = "typicality-ngram"
FORMAT_VERSION = 1


class SequenceModel(Protocol):
    vocab_size: int
    eos: Optional[int]

    def next_distribution(self, context: Sequence[int]) -> np.ndarray: ...


def _check_context(context: Sequence[int], vocab_size: int) -> tuple[int, ...]:
    ctx = tuple(int(t) for t in context)
    for t in ctx:
        if not 0 <= t < vocab_size:
            raise ValueError(f"invalid token id in context: {t}")
    return ctx


class CallableModel:
    """Wrap a ``context -> probabilities`` function as a model.

    Handy for hand-built distributions (deterministic or uniform models) in
    tests and oracles; outputs are not required to have full support.
    """

    def __init__(self, vocab_size: int, fn: Callable[[tuple[int, ...]], Sequence[float]],
                 eos: Optional[int] = None):
        self.vocab_size = vocab_size
        self.eos = eos
        self._fn = fn

    def next_distribution(self, context: Sequence[int]) -> np.ndarray:
        ctx = _check_context(context, self.vocab_size)
        p = np.asarray(self._fn(ctx), dtype=np.float64)
        if p.shape != (self.vocab_size,):
            raise ValueError(f"distribution has shape {p.shape}, expected ({self.vocab_size},)")
        return p


class NGramModel:
    """Interpolated n-gram model; immutable once built.

    ``counts[k]`` maps a length-``k`` context tuple (``PAD`` = before the
    sequence start) to a ``{token: count}`` dict; ``counts[0]`` has the
    single key ``()``.
    """

    def __init__(self, order: int, alpha: float, counts: list[dict[tuple, dict[int, int]]],
                 vocab_size: int = VOCAB_SIZE, eos: Optional[int] = EOS):
        if order < 1:
            raise ValueError("order must be >= 1")
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        if len(counts) != order:
            raise ValueError(f"expected {order} count tables, got {len(counts)}")
        self.order = order
        self.alpha = float(alpha)
        self.vocab_size = vocab_size
        self.eos = eos
        self.counts = counts

        unigram = np.zeros(vocab_size, dtype=np.int64)
        for tok, c in counts[0].get((), {}).items():
            unigram[tok] = c
        self.unigram_counts = unigram
        self.total_tokens = int(unigram.sum())
        q0 = (unigram + 1.0) / (self.total_tokens + vocab_size)
        q0.flags.writeable = False
        self._q0 = q0
        # per level: ctx -> (token ids, counts as float, row total)
        self._rows: list[dict[tuple, tuple[np.ndarray, np.ndarray, float]]] = [{}]
        for k in range(1, order):
            rows = {}
            for ctx, row in counts[k].items():
                toks = np.fromiter(row.keys(), dtype=np.intp, count=len(row))
                cnts = np.fromiter(row.values(), dtype=np.float64, count=len(row))
                rows[ctx] = (toks, cnts, float(cnts.sum()))
            self._rows.append(rows)
        self._cached = lru_cache(maxsize=1 << 16)(self._distribution)

    def _distribution(self, ctx: tuple[int, ...]) -> np.ndarray:
        q = self._q0
        n = len(ctx)
        for k in range(1, self.order):
            row = self._rows[k].get(ctx[n - k:])
            if row is None:
                continue
            toks, cnts, total = row
            nxt = self.alpha * q
            nxt[toks] += cnts
            nxt /= total + self.alpha
            q = nxt
        if q is not self._q0:
            q.flags.writeable = False
        return q

    def context_key(self, context: Sequence[int]) -> tuple[int, ...]:
        """Last ``order - 1`` tokens, left-padded with ``PAD``."""
        ctx = _check_context(context, self.vocab_size)
        width = self.order - 1
        if width == 0:
            return ()
        if len(ctx) >= width:
            return ctx[len(ctx) - width:]
        return (PAD,) * (width - len(ctx)) + ctx

    def next_distribution(self, context: Sequence[int]) -> np.ndarray:
        """Probabilities of the next token; a read-only array of length ``vocab_size``."""
        return self._cached(self.context_key(context))

    def level_distribution(self, context: Sequence[int], level: int) -> np.ndarray:
        """``q_level`` for the given context, i.e. interpolation truncated at ``level``."""
        if not 0 <= level < self.order:
            raise ValueError(f"level must be in [0, {self.order - 1}]")
        key = self.context_key(context)
        q = self._q0.copy()
        for k in range(1, level + 1):
            row = self._rows[k].get(key[len(key) - k:])
            if row is None:
                continue
            toks, cnts, total = row
            nxt = self.alpha * q
            nxt[toks] += cnts
            q = nxt / (total + self.alpha)
        return q

    def __eq__(self, other):
        if not isinstance(other, NGramModel):
            return NotImplemented
        return (self.order, self.alpha, self.vocab_size, self.eos, self.counts) == (
            other.order, other.alpha, other.vocab_size, other.eos, other.counts)

    # -- persistence -----------------------------------------------------------

    def to_json(self) -> str:
        tables = []
        for table in self.counts:
            rows = [[list(ctx), sorted([t, c] for t, c in row.items())]
                    for ctx, row in sorted(table.items())]
            tables.append(rows)
        doc = {
            "magic": MAGIC,
            "version": FORMAT_VERSION,
            "order": self.order,
            "alpha": self.alpha,
            "vocab_size": self.vocab_size,
            "eos": self.eos,
            "counts": tables,
        }
        return json.dumps(doc, separators=(",", ":"), sort_keys=True)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    @classmethod
    def from_json(cls, text: str) -> "NGramModel":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelLoadError(f"corrupt model file: {exc.msg}") from None
        if not isinstance(doc, dict) or doc.get("magic") != MAGIC:
            raise ModelLoadError("not a model file (bad magic)")
        version = doc.get("version")
        if version != FORMAT_VERSION:
            raise ModelVersionError(f"unsupported model format version {version!r} "
                                    f"(this build reads version {FORMAT_VERSION})")
        try:
            order = int(doc["order"])
            vocab_size = int(doc["vocab_size"])
            counts = []
            for rows in doc["counts"]:
                table = {}
                for ctx, pairs in rows:
                    table[tuple(int(t) for t in ctx)] = {int(t): int(c) for t, c in pairs}
                counts.append(table)
            return cls(order, float(doc["alpha"]), counts, vocab_size=vocab_size, eos=doc["eos"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelLoadError(f"corrupt model file: {exc}") from None

    @classmethod
    def load(cls, path: Union[str, Path]) -> "NGramModel":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except UnicodeDecodeError:
            raise ModelLoadError("model file is not UTF-8 text") from None
        return cls.from_json(text)


def train(sequences: Iterable[Sequence[int]], order: int = 5, alpha: float = 1.0,
          vocab_size: int = VOCAB_SIZE, eos: Optional[int] = EOS) -> NGramModel:
    """Count n-grams of every order up to ``order`` over the training sequences."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    counts: list[dict] = [defaultdict(lambda: defaultdict(int)) for _ in range(order)]
    n_seqs = 0
    for seq in sequences:
        seq = [int(t) for t in seq]
        if not seq:
            continue
        for t in seq:
            if not 0 <= t < vocab_size:
                raise TrainingError(f"invalid token id {t}")
        if eos is not None and seq[-1] != eos:
            raise TrainingError("training sequence does not end with end-of-sequence")
        padded = [PAD] * (order - 1) + seq
        for pos, tok in enumerate(seq):
            i = pos + order - 1
            for k in range(order):
                counts[k][tuple(padded[i - k:i])][tok] += 1
        n_seqs += 1
    if n_seqs == 0:
        raise TrainingError("cannot train on an empty corpus")
    frozen = [{ctx: dict(row) for ctx, row in table.items()} for table in counts]
    return NGramModel(order, alpha, frozen, vocab_size=vocab_size, eos=eos)
