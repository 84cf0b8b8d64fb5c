"""Information content, entropy and typicality divergences.

All quantities are in nats. ``to_units`` converts to bits at report time.
Signed divergences are stored (``entropy - ic`` per event,
``expected_id - id`` per sequence); take ``abs`` for the unsigned form.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import SequenceModel

LN2 = math.log(2.0)
MAX_EXACT_VOCAB = 5
MAX_EXACT_LEN = 6


def to_units(value, units: str = "nats"):
    if units == "nats":
        return value
    if units == "bits":
        return value / LN2
    raise ValueError(f"unknown units {units!r}")


@dataclass(frozen=True)
class EventTypicality:
    ic: float
    entropy: float

    @property
    def epsilon(self) -> float:
        return self.entropy - self.ic


@dataclass(frozen=True)
class SequenceTypicality:
    total_ic: float
    length: int
    epsilon_id: Optional[float] = None

    @property
    def id(self) -> float:
        return self.total_ic / self.length

    def against(self, expected_id: float) -> "SequenceTypicality":
        return SequenceTypicality(self.total_ic, self.length, expected_id - self.id)


def event_ic(dist: np.ndarray, token: int) -> float:
    """Surprisal ``-ln q(token)``; ``inf`` (with a warning) for zero probability."""
    p = float(dist[token])
    if p <= 0.0:
        warnings.warn(f"token {token} has zero probability; information content is infinite",
                      RuntimeWarning, stacklevel=2)
        return math.inf
    return -math.log(p) if p < 1.0 else 0.0


def event_entropy(dist: np.ndarray) -> float:
    p = np.asarray(dist, dtype=np.float64)
    nz = p[p > 0]
    h = float(-np.dot(nz, np.log(nz)))
    return h if h > 0.0 else 0.0


def event_typicality(dist: np.ndarray, token: int) -> EventTypicality:
    return EventTypicality(event_ic(dist, token), event_entropy(dist))


def score_events(model: SequenceModel, tokens: Sequence[int],
                 truncated: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Per-position IC and entropy of ``tokens`` under ``model``, eos included.

    For a truncated sample the trailing appended eos was never drawn from the
    model, so it is left out.
    """
    n = len(tokens) - 1 if truncated else len(tokens)
    ic = np.empty(n)
    ent = np.empty(n)
    for t in range(n):
        dist = model.next_distribution(tokens[:t])
        ic[t] = event_ic(dist, tokens[t])
        ent[t] = event_entropy(dist)
    return ic, ent


def sequence_ic(model: SequenceModel, tokens: Sequence[int],
                truncated: bool = False) -> SequenceTypicality:
    """Total IC over scored positions; ``length`` counts those positions."""
    ic, _ = score_events(model, tokens, truncated)
    if ic.size == 0:
        raise ValueError("sequence must contain at least one scored token")
    return SequenceTypicality(math.fsum(ic), int(ic.size))


def mean_and_se(values: Sequence[float]) -> tuple[float, float]:
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("no values")
    mean = math.fsum(x) / x.size
    se = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return mean, se


def expected_id(model: SequenceModel, corpus: Optional[Iterable[Sequence[int]]] = None, *,
                n_samples: Optional[int] = None, max_len: int = 1024, seed: int = 0,
                workers: int = 1) -> tuple[float, float]:
    """Mean information density and its standard error.

    With ``corpus`` the mean runs over those token sequences. Otherwise
    ``n_samples`` sequences of at most ``max_len`` drawn tokens are sampled
    ancestrally from ``model``.
    """
    if corpus is not None:
        seqs = list(corpus)
        if not seqs:
            raise ValueError("reference corpus is empty")
        return mean_and_se([sequence_ic(model, s).id for s in seqs])
    if not n_samples or n_samples < 1:
        raise ValueError("need a corpus or n_samples >= 1")
    from .sampling import SamplerConfig, sample_batch

    samples = sample_batch(model, SamplerConfig(max_len=max_len, seed=seed), n_samples,
                           workers=workers)
    return mean_and_se([sequence_ic(model, s.tokens, s.truncated).id for s in samples])


@dataclass(frozen=True)
class ExactResult:
    entropy: float        # H(x) of the (truncated) sequence distribution
    expected_ic: float    # E[IC(x)] with IC scored by the model
    expected_id: float    # E[IC(x) / |x|]
    mass: float
    n_sequences: int


def enumerate_exact(model: SequenceModel, max_len: int, eos: Optional[int] = -1,
                    tol: float = 1e-10) -> ExactResult:
    """Exhaustive sum over every sequence the sampler can emit, for tiny models only.

    Mirrors :func:`~typicality.sampling.sample_sequence`: sequences end at the
    first eos, or after ``max_len`` draws (then an eos is appended with
    probability 1 and not scored). With ``eos=None`` every sequence has
    exactly ``max_len`` tokens. ``eos=-1`` means ``model.eos``.
    """
    if eos == -1:
        eos = model.eos
    if model.vocab_size > MAX_EXACT_VOCAB or max_len > MAX_EXACT_LEN:
        raise ValueError(f"enumeration limited to vocab <= {MAX_EXACT_VOCAB} and "
                         f"max_len <= {MAX_EXACT_LEN}")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")

    terms_h, terms_ic, terms_id, terms_p = [], [], [], []

    def visit(prefix: list[int], logp: float, ic: float):
        dist = model.next_distribution(prefix)
        for v in range(model.vocab_size):
            pv = float(dist[v])
            if pv <= 0.0:
                continue
            seq = prefix + [v]
            lp, step_ic = logp + math.log(pv), ic - math.log(pv)
            if v == eos or len(seq) == max_len:
                p = math.exp(lp)
                terms_p.append(p)
                terms_h.append(-p * lp)
                terms_ic.append(p * step_ic)
                terms_id.append(p * step_ic / len(seq))
            else:
                visit(seq, lp, step_ic)

    visit([], 0.0, 0.0)
    mass = math.fsum(terms_p)
    if abs(mass - 1.0) > tol:
        raise ArithmeticError(f"enumerated probability mass {mass!r} differs from 1")
    return ExactResult(math.fsum(terms_h), math.fsum(terms_ic), math.fsum(terms_id),
                       mass, len(terms_p))


# -- CSV dumps -------------------------------------------------------------------

EVENT_COLUMNS = ["piece_id", "position", "token_id", "ic", "entropy", "epsilon"]
SEQUENCE_COLUMNS = ["piece_id", "length", "total_ic", "id", "epsilon_id"]


def fmt(x: float) -> str:
    return repr(float(x))


def write_event_csv(path, rows: Iterable[tuple[str, Sequence[int], np.ndarray, np.ndarray]],
                    units: str = "nats") -> None:
    """``rows`` yields ``(piece_id, tokens, ic, entropy)`` per sequence.

    Only scored positions are written, so a truncated sample's appended eos
    has no row.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVENT_COLUMNS)
        for pid, tokens, ic, ent in rows:
            ic_u, ent_u = to_units(ic, units), to_units(ent, units)
            for t in range(len(ic_u)):
                w.writerow([pid, t, int(tokens[t]), fmt(ic_u[t]), fmt(ent_u[t]),
                            fmt(ent_u[t] - ic_u[t])])


def write_sequence_csv(path, rows: Iterable[tuple[str, SequenceTypicality]],
                       units: str = "nats") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SEQUENCE_COLUMNS)
        for pid, s in rows:
            eps = "" if s.epsilon_id is None else fmt(to_units(s.epsilon_id, units))
            w.writerow([pid, s.length, fmt(to_units(s.total_ic, units)),
                        fmt(to_units(s.id, units)), eps])
