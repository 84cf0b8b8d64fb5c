"""Ancestral and locally typical sampling.

Randomness: item ``i`` of a run seeded with ``seed`` draws from
``Generator(PCG64(SeedSequence(seed, spawn_key=(i,))))``. Streams depend only
on ``(seed, i)``, so batches are reproducible regardless of worker count.
Tokens are drawn by inverse CDF from one uniform per step.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .metrics import event_entropy
from .model import SequenceModel

DEFAULT_TAUS = (0.9, 0.5, 0.2)


@dataclass(frozen=True)
class SamplerConfig:
    """``tau=None`` is conventional ancestral sampling."""

    tau: Optional[float] = None
    max_len: int = 1024
    seed: int = 0

    def __post_init__(self):
        if self.tau is not None and not 0.0 < self.tau <= 1.0:
            raise ValueError(f"tau must be in (0, 1], got {self.tau}")
        if self.max_len < 1:
            raise ValueError(f"max_len must be >= 1, got {self.max_len}")

    @property
    def strategy(self) -> str:
        return "conventional" if self.tau is None else "typical"

    @property
    def label(self) -> str:
        return "Conventional" if self.tau is None else f"Typical@{self.tau:g}"


@dataclass
class Sample:
    tokens: list[int]
    truncated: bool = False


def typical_prune(dist: np.ndarray, tau: float) -> np.ndarray:
    """Keep the smallest set of most typical tokens holding mass ``tau``.

    Tokens are ranked by ``|H + ln q_v|`` (ties by token id) and added until
    their mass reaches ``tau``; the rest are zeroed and the survivors
    renormalized. When every supported token survives the input is returned
    unchanged.
    """
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    q = np.asarray(dist, dtype=np.float64)
    support = np.flatnonzero(q > 0)
    if support.size == 0:
        raise ValueError("distribution has no mass")
    h = event_entropy(q)
    eps = np.abs(h + np.log(q[support]))
    order = support[np.lexsort((support, eps))]
    cum = np.cumsum(q[order])
    k = int(np.searchsorted(cum, tau * cum[-1], side="left")) + 1
    if k >= support.size:
        return q.copy()
    keep = order[:k]
    out = np.zeros_like(q)
    out[keep] = q[keep] / q[keep].sum()
    return out


def rng_for(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def draw(dist: np.ndarray, rng: np.random.Generator, size: Optional[int] = None):
    """Inverse-CDF draw; zero-probability tokens are never returned."""
    cum = np.cumsum(dist)
    u = rng.random(size) * cum[-1]
    idx = np.searchsorted(cum, u, side="right")
    return np.minimum(idx, len(cum) - 1)


def step_distribution(model: SequenceModel, context: Sequence[int],
                      tau: Optional[float]) -> np.ndarray:
    dist = model.next_distribution(context)
    return dist if tau is None else typical_prune(dist, tau)


def sample_sequence(model: SequenceModel, config: SamplerConfig, index: int = 0) -> Sample:
    """Draw one sequence on stream ``(config.seed, index)``.

    Stops when eos is drawn. After ``max_len`` draws without eos, an eos is
    appended and the sample is marked truncated; that appended token is not
    a model event and the metrics skip it. A model without eos always yields
    exactly ``max_len`` tokens.
    """
    rng = rng_for(config.seed, index)
    eos = model.eos
    tokens: list[int] = []
    while len(tokens) < config.max_len:
        tok = int(draw(step_distribution(model, tokens, config.tau), rng))
        tokens.append(tok)
        if tok == eos:
            return Sample(tokens)
    if eos is None:
        return Sample(tokens)
    return Sample(tokens + [eos], truncated=True)


def sample_batch(model: SequenceModel, config: SamplerConfig, count: int,
                 workers: int = 1) -> list[Sample]:
    if count < 1:
        raise ValueError("count must be >= 1")
    if workers <= 1:
        return [sample_sequence(model, config, i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda i: sample_sequence(model, config, i), range(count)))


# -- token container -----------------------------------------------------------

def write_token_jsonl(path: Union[str, Path], items: Sequence[tuple[str, Sequence[int]]],
                      meta: Optional[dict] = None,
                      truncated: Optional[Sequence[bool]] = None) -> None:
    """One ``{"id", "tokens"}`` object per line, optionally after a ``{"meta": ...}`` line."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if meta is not None:
            fh.write(json.dumps({"meta": meta}, sort_keys=True, separators=(",", ":")) + "\n")
        for i, (pid, toks) in enumerate(items):
            obj = {"id": pid, "tokens": [int(t) for t in toks]}
            if truncated is not None:
                obj["truncated"] = bool(truncated[i])
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


@dataclass
class TokenFile:
    meta: dict = field(default_factory=dict)
    ids: list[str] = field(default_factory=list)
    sequences: list[list[int]] = field(default_factory=list)
    truncated: list[bool] = field(default_factory=list)


def read_token_jsonl(path: Union[str, Path]) -> TokenFile:
    out = TokenFile()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "meta" in obj and "tokens" not in obj:
                out.meta = obj["meta"]
                continue
            out.ids.append(str(obj["id"]))
            out.sequences.append([int(t) for t in obj["tokens"]])
            out.truncated.append(bool(obj.get("truncated", False)))
    return out


def batch_meta(config: SamplerConfig, model_hash: str, samples: Sequence[Sample]) -> dict:
    meta = asdict(config)
    meta.update(strategy=config.strategy, model_hash=model_hash,
                n_truncated=sum(s.truncated for s in samples))
    return meta
