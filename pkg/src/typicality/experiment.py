"""End-to-end typicality experiment and cross-condition comparison.

Config files are flat ``key = value`` text; ``#`` starts a comment and
unknown keys are rejected. Keys:

=================  =======================================================
corpus             path to a JSONL corpus, an ``.abc`` file or a directory
                   of ``.abc`` files (relative to the config file)
corpus_format      ``jsonl`` or ``abc`` (default: inferred from the path)
order              n-gram order (default 5)
alpha              interpolation strength (default 1.0)
taus               comma-separated typical-sampling thresholds
                   (default ``0.9, 0.5, 0.2``)
n_samples          sequences per sampled condition (default: test-set size)
max_len            token cap for sampling (default: longest test sequence)
max_piece_len      drop pieces longer than this many tokens (default: keep all)
seed               sampling seed (default 0)
split_seed         split hashing seed (default 0)
units              ``nats`` or ``bits`` for all written metrics (default nats)
workers            sampling threads (default 1; output does not depend on it)
out                output directory
=================  =======================================================
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from . import __version__
from .corpus import TEST, TRAIN, Corpus, load_corpus, split, write_split_csv
from .errors import ConfigError
from .metrics import (SequenceTypicality, mean_and_se, score_events, to_units,
                      write_event_csv, write_sequence_csv)
from .model import NGramModel, train
from .sampling import DEFAULT_TAUS, SamplerConfig, sample_batch, write_token_jsonl

REFERENCE = "Reference"
CONVENTIONAL = "Conventional"
MAX_BINS = 400


@dataclass
class ExperimentConfig:
    corpus: Optional[str] = None
    corpus_format: Optional[str] = None
    order: int = 5
    alpha: float = 1.0
    taus: tuple[float, ...] = DEFAULT_TAUS
    n_samples: Optional[int] = None
    max_len: Optional[int] = None
    max_piece_len: Optional[int] = None
    seed: int = 0
    split_seed: int = 0
    units: str = "nats"
    workers: int = 1
    out: Optional[str] = None

    def validate(self) -> "ExperimentConfig":
        if not self.corpus:
            raise ConfigError("corpus", "required")
        if self.corpus_format not in (None, "jsonl", "abc"):
            raise ConfigError("corpus_format", f"must be jsonl or abc, got {self.corpus_format!r}")
        if self.order < 1:
            raise ConfigError("order", "must be >= 1")
        if not self.alpha > 0:
            raise ConfigError("alpha", "must be positive")
        if not self.taus:
            raise ConfigError("taus", "need at least one value")
        for t in self.taus:
            if not 0.0 < t <= 1.0:
                raise ConfigError("taus", f"{t} is outside (0, 1]")
        if len(set(self.taus)) != len(self.taus):
            raise ConfigError("taus", "duplicate values")
        for name in ("n_samples", "max_len", "max_piece_len"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(name, "must be >= 1")
        if self.units not in ("nats", "bits"):
            raise ConfigError("units", f"must be nats or bits, got {self.units!r}")
        if self.workers < 1:
            raise ConfigError("workers", "must be >= 1")
        return self

    def digest(self) -> str:
        d = asdict(self)
        d.pop("out")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


def _convert(name: str, raw: str):
    raw = raw.strip()
    try:
        if name in ("order", "seed", "split_seed", "workers"):
            return int(raw)
        if name in ("n_samples", "max_len", "max_piece_len"):
            return None if raw.lower() in ("", "none") else int(raw)
        if name == "alpha":
            return float(raw)
        if name == "taus":
            return tuple(float(t) for t in raw.replace(",", " ").split())
    except ValueError:
        raise ConfigError(name, f"cannot parse {raw!r}") from None
    return raw or None


def parse_config(text: str, base_dir: Union[str, Path, None] = None, **overrides) -> ExperimentConfig:
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, raw = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(key, f"line {lineno}: expected key = value")
        if key not in known:
            raise ConfigError(key, "unknown key")
        values[key] = _convert(key, raw)
    for key, v in overrides.items():
        if v is not None:
            if key not in known:
                raise ConfigError(key, "unknown key")
            values[key] = v
    cfg = ExperimentConfig(**values)
    if cfg.corpus and base_dir is not None and not Path(cfg.corpus).is_absolute() \
            and "corpus" not in overrides:
        cfg.corpus = str(Path(base_dir) / cfg.corpus)
    return cfg.validate()


def load_config(path: Union[str, Path], **overrides) -> ExperimentConfig:
    """Read a key/value config, or the ``config`` block of a run manifest."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        doc = json.loads(text)
        values = dict(doc.get("config", doc))
        if "taus" in values:
            values["taus"] = tuple(values["taus"])
        values.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return ExperimentConfig(**values).validate()
        except TypeError as exc:
            raise ConfigError("config", str(exc)) from None
    return parse_config(text, base_dir=path.parent, **overrides)


# -- histograms ----------------------------------------------------------------

@dataclass
class Histogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    series_label: str

    @property
    def density(self) -> np.ndarray:
        total = self.counts.sum()
        if total == 0:
            return np.zeros(len(self.counts))
        return self.counts / (total * np.diff(self.bin_edges))


def shared_edges(reference: np.ndarray, pooled: Sequence[np.ndarray]) -> np.ndarray:
    """Freedman-Diaconis bin width from ``reference``, stretched to cover every series."""
    ref = np.asarray(reference, dtype=np.float64)
    allv = np.concatenate([ref] + [np.asarray(p, dtype=np.float64) for p in pooled])
    lo, hi = float(allv.min()), float(allv.max())
    ref_edges = np.histogram_bin_edges(ref, bins="fd")
    width = float(ref_edges[1] - ref_edges[0]) if len(ref_edges) > 1 else 0.0
    if len(ref_edges) <= 2:
        sturges = np.histogram_bin_edges(ref, bins="sturges")
        width = float(sturges[1] - sturges[0]) if len(sturges) > 1 else 0.0
    if not width > 0:
        width = (hi - lo) / 10 if hi > lo else 1.0
    anchor = float(ref_edges[0])
    start = anchor - math.ceil((anchor - lo) / width) * width
    n = max(1, math.ceil((hi - start) / width))
    if n > MAX_BINS:
        width = (hi - start) / MAX_BINS
        n = MAX_BINS
    edges = start + width * np.arange(n + 1)
    if edges[-1] < hi:
        edges[-1] = hi
    return edges


def histogram(values: np.ndarray, edges: np.ndarray, label: str) -> Histogram:
    counts, _ = np.histogram(values, bins=edges)
    return Histogram(edges, counts.astype(np.int64), label)


def wasserstein_1(a: Histogram, b: Histogram) -> float:
    """1-Wasserstein distance between two histograms on the same bins."""
    if not np.array_equal(a.bin_edges, b.bin_edges):
        raise ValueError("histograms must share bin edges")
    pa = a.counts / max(a.counts.sum(), 1)
    pb = b.counts / max(b.counts.sum(), 1)
    cdf_gap = np.abs(np.cumsum(pa) - np.cumsum(pb))[:-1]
    centers = 0.5 * (a.bin_edges[1:] + a.bin_edges[:-1])
    return float(np.dot(cdf_gap, np.diff(centers)))


def write_histograms(path, hists: Sequence[Histogram]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "count", "density", "series"])
        for h in hists:
            dens = h.density
            for i, c in enumerate(h.counts):
                w.writerow([repr(float(h.bin_edges[i])), repr(float(h.bin_edges[i + 1])),
                            int(c), repr(float(dens[i])), h.series_label])


def describe(values: np.ndarray) -> dict:
    x = np.asarray(values, dtype=np.float64)
    mean, se = mean_and_se(x)
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    return {"n": int(x.size), "mean": mean, "se": se, "median": float(med),
            "stdev": float(np.std(x, ddof=1)) if x.size > 1 else 0.0, "iqr": float(q3 - q1)}


# -- pipeline -------------------------------------------------------------------

@dataclass
class Condition:
    label: str
    tau: Optional[float]               # None for Reference and Conventional
    epsilon_sym: np.ndarray            # per event, nats
    ids: np.ndarray                    # per sequence, nats
    n_truncated: int = 0

    @property
    def sampled(self) -> bool:
        return self.label != REFERENCE


@dataclass
class ReportBundle:
    conditions: dict[str, Condition]
    expected_id: float
    expected_id_se: float
    units: str = "nats"
    manifest: dict = field(default_factory=dict)

    def epsilon_id(self, label: str) -> np.ndarray:
        return self.expected_id - self.conditions[label].ids

    @property
    def typical(self) -> list[Condition]:
        """Typical conditions ordered by decreasing tau."""
        conds = [c for c in self.conditions.values() if c.tau is not None]
        return sorted(conds, key=lambda c: -c.tau)


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    if path.is_dir():
        for f in sorted(path.rglob("*")):
            if f.is_file():
                h.update(f.relative_to(path).as_posix().encode())
                h.update(f.read_bytes())
    else:
        h.update(path.read_bytes())
    return h.hexdigest()


def derive_seed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{seed}\x00{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _score(model, pid_tokens, truncated=None):
    rows, eps, seqs = [], [], []
    for i, (pid, toks) in enumerate(pid_tokens):
        ic, ent = score_events(model, toks, bool(truncated and truncated[i]))
        rows.append((pid, toks, ic, ent))
        eps.append(ent - ic)
        seqs.append((pid, SequenceTypicality(math.fsum(ic), len(ic))))
    return rows, np.concatenate(eps) if eps else np.empty(0), seqs


def run_experiment(config: ExperimentConfig, out: Union[str, Path, None] = None) -> ReportBundle:
    """Train on the train split, score the test split, sample and analyze every condition.

    Writes to the output directory: per-condition event/sequence metric CSVs,
    sampled token files, ``hist_events.csv``, ``hist_sequences.csv``,
    ``summary.csv``, ``trends.json``, ``splits.csv``, ``model.json`` and
    ``manifest.json``.
    """
    config.validate()
    out_dir = Path(out or config.out or "")
    if not (out or config.out):
        raise ConfigError("out", "output directory required")
    corpus_path = Path(config.corpus)
    if not corpus_path.exists():
        raise ConfigError("corpus", f"not found: {corpus_path}")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        probe = out_dir / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError("out", f"not writable: {exc}") from None

    corpus = load_corpus(corpus_path, config.corpus_format)
    tokens = {p.id: toks for p, toks in zip(corpus, corpus.tokens())}
    if config.max_piece_len is not None:
        tokens = {pid: t for pid, t in tokens.items() if len(t) <= config.max_piece_len}
    if not tokens:
        raise ConfigError("corpus", "no pieces left to analyze")
    assignment = split(list(tokens), config.split_seed)
    train_ids = sorted(pid for pid, s in assignment.items() if s == TRAIN)
    test_ids = sorted(pid for pid, s in assignment.items() if s == TEST)
    if not train_ids or not test_ids:
        raise ConfigError("corpus", "corpus too small: train or test split is empty")

    model = train([tokens[pid] for pid in train_ids], config.order, config.alpha)
    model.save(out_dir / "model.json")
    write_split_csv(assignment, out_dir / "splits.csv")

    n_samples = config.n_samples or len(test_ids)
    max_len = config.max_len or max(len(tokens[pid]) for pid in test_ids)

    units = config.units
    conditions: dict[str, Condition] = {}
    seq_rows: dict[str, list] = {}

    ref_rows, ref_eps, ref_seqs = _score(model, [(pid, tokens[pid]) for pid in test_ids])
    ref_ids = np.array([s.id for _, s in ref_seqs])
    e_id, e_id_se = mean_and_se(ref_ids)
    conditions[REFERENCE] = Condition(REFERENCE, None, ref_eps, ref_ids)
    write_event_csv(out_dir / "events_Reference.csv", ref_rows, units)
    seq_rows[REFERENCE] = ref_seqs

    seeds = {}
    sampled = [SamplerConfig(None, max_len, derive_seed(config.seed, CONVENTIONAL))]
    for tau in sorted(config.taus, reverse=True):
        label = SamplerConfig(tau).label
        sampled.append(SamplerConfig(tau, max_len, derive_seed(config.seed, label)))
    for sc in sampled:
        seeds[sc.label] = sc.seed
        samples = sample_batch(model, sc, n_samples, workers=config.workers)
        items = [(f"{sc.label}-{i:05d}", s.tokens) for i, s in enumerate(samples)]
        write_token_jsonl(out_dir / f"samples_{sc.label}.jsonl", items,
                          meta={"strategy": sc.strategy, "tau": sc.tau, "seed": sc.seed,
                                "max_len": sc.max_len, "model_hash": model.digest()},
                          truncated=[s.truncated for s in samples])
        rows, eps, seqs = _score(model, items, [s.truncated for s in samples])
        write_event_csv(out_dir / f"events_{sc.label}.csv", rows, units)
        conditions[sc.label] = Condition(sc.label, sc.tau, eps, np.array([s.id for _, s in seqs]),
                                         sum(s.truncated for s in samples))
        seq_rows[sc.label] = seqs

    for label, seqs in seq_rows.items():
        write_sequence_csv(out_dir / f"sequences_{label}.csv",
                           [(pid, s.against(e_id)) for pid, s in seqs], units)

    manifest = {
        "tool_version": __version__,
        "config": {**asdict(config), "taus": list(config.taus)},
        "config_hash": config.digest(),
        "corpus_hash": _sha256_file(corpus_path),
        "model_hash": model.digest(),
        "seeds": {"seed": config.seed, "split_seed": config.split_seed, "conditions": seeds},
        "taus": sorted(config.taus, reverse=True),
        "n_samples": n_samples,
        "max_len": max_len,
        "n_train": len(train_ids),
        "n_test": len(test_ids),
        "expected_id": to_units(e_id, units),
        "expected_id_se": to_units(e_id_se, units),
        "expected_id_source": "reference test split (empirical stand-in for the true distribution)",
        "truncated": {label: c.n_truncated for label, c in conditions.items()},
        "units": units,
        "key_accidentals_applied": corpus.meta.get("key_accidentals_applied", True),
    }
    bundle = ReportBundle(conditions, e_id, e_id_se, units, manifest)
    write_report(bundle, out_dir)
    written = ["model.json", "splits.csv", "hist_events.csv", "hist_sequences.csv", "summary.csv"]
    for label in conditions:
        written += [f"events_{label}.csv", f"sequences_{label}.csv"]
        if label != REFERENCE:
            written.append(f"samples_{label}.jsonl")
    if (out_dir / "trends.json").exists() and len(bundle.typical) >= 2:
        written.append("trends.json")
    manifest["artifacts"] = {name: _sha256_file(out_dir / name) for name in sorted(written)}
    with open(out_dir / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return bundle


def bundle_histograms(bundle: ReportBundle) -> tuple[list[Histogram], list[Histogram]]:
    """Event and sequence histogram families, each on bins shared across conditions."""
    u = bundle.units
    labels = list(bundle.conditions)
    ev = {k: to_units(bundle.conditions[k].epsilon_sym, u) for k in labels}
    sq = {k: to_units(bundle.epsilon_id(k), u) for k in labels}
    ev_edges = shared_edges(ev[REFERENCE], list(ev.values()))
    sq_edges = shared_edges(sq[REFERENCE], list(sq.values()))
    return ([histogram(ev[k], ev_edges, k) for k in labels],
            [histogram(sq[k], sq_edges, k) for k in labels])


def write_report(bundle: ReportBundle, out_dir: Path) -> None:
    u = bundle.units
    ev_hists, sq_hists = bundle_histograms(bundle)
    write_histograms(out_dir / "hist_events.csv", ev_hists)
    write_histograms(out_dir / "hist_sequences.csv", sq_hists)
    cols = ["family", "series", "n", "mean", "se", "median", "stdev", "iqr"]
    with open(out_dir / "summary.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for label, c in bundle.conditions.items():
            for family, values in (("epsilon_sym", c.epsilon_sym),
                                   ("epsilon_id", bundle.epsilon_id(label)),
                                   ("id", c.ids)):
                d = describe(to_units(values, u))
                w.writerow([family, label, d["n"]] + [repr(d[k]) for k in cols[3:]])
    if len(bundle.typical) >= 2 and CONVENTIONAL in bundle.conditions:
        with open(out_dir / "trends.json", "w", encoding="utf-8", newline="\n") as fh:
            json.dump(compare_conditions(bundle), fh, indent=2, sort_keys=True)
            fh.write("\n")


# -- comparison -----------------------------------------------------------------

def _status(margin: float) -> str:
    return "tie" if margin == 0 else "holds" if margin > 0 else "violated"


def compare_conditions(bundle: ReportBundle) -> dict:
    """Trend checks across Conventional and the Typical conditions.

    * ``stdev_trend``: spread of per-event signed divergence shrinks as tau
      decreases (Conventional counts as tau = 1).
    * ``id_trend``: mean information density of samples falls as tau
      decreases; each step carries the standard error of the difference.
    * ``proximity``: Conventional is closer to Reference than each Typical
      condition, in 1-Wasserstein distance on the shared event bins.

    Margins are oriented so that positive means the trend holds; a zero
    margin is reported as a tie.
    """
    typical = bundle.typical
    if CONVENTIONAL not in bundle.conditions or len(typical) < 2:
        raise ValueError("need Conventional plus at least two Typical conditions")
    if REFERENCE not in bundle.conditions:
        raise ValueError("need a Reference condition")
    chain = [bundle.conditions[CONVENTIONAL]] + typical

    stdev_steps = []
    for hi, lo in zip(chain, chain[1:]):
        s_hi = float(np.std(hi.epsilon_sym, ddof=1))
        s_lo = float(np.std(lo.epsilon_sym, ddof=1))
        stdev_steps.append({"from": hi.label, "to": lo.label, "stdev_from": s_hi,
                            "stdev_to": s_lo, "margin": s_hi - s_lo,
                            "status": _status(s_hi - s_lo)})
    conv_sd = float(np.std(chain[0].epsilon_sym, ddof=1))
    typical_vs_conv = {c.label: conv_sd - float(np.std(c.epsilon_sym, ddof=1)) for c in typical}

    id_steps = []
    for hi, lo in zip(chain, chain[1:]):
        m_hi, se_hi = mean_and_se(hi.ids)
        m_lo, se_lo = mean_and_se(lo.ids)
        se = math.hypot(se_hi, se_lo)
        margin = m_hi - m_lo
        id_steps.append({"from": hi.label, "to": lo.label, "mean_from": m_hi, "mean_to": m_lo,
                         "se_from": se_hi, "se_to": se_lo, "se_diff": se, "margin": margin,
                         "margin_over_se": margin / se if se > 0 else (0.0 if margin == 0 else math.inf),
                         "status": _status(margin)})

    ev_hists, _ = bundle_histograms(bundle)
    by_label = {h.series_label: h for h in ev_hists}
    ref_h = by_label[REFERENCE]
    w_conv = wasserstein_1(by_label[CONVENTIONAL], ref_h)
    prox = {c.label: {"w1_typical": wasserstein_1(by_label[c.label], ref_h),
                      "w1_conventional": w_conv} for c in typical}
    for v in prox.values():
        v["margin"] = v["w1_typical"] - v["w1_conventional"]
        v["status"] = _status(v["margin"])

    def ok(steps):
        return all(s["status"] != "violated" for s in steps)

    tau_steps = [s for s in id_steps if s["from"] != CONVENTIONAL]
    return {
        "units": bundle.units,
        "stdev_trend": {"steps": stdev_steps, "typical_minus_conventional": typical_vs_conv,
                        "holds": ok(stdev_steps) and all(m >= 0 for m in typical_vs_conv.values())},
        "id_trend": {"steps": id_steps, "holds": ok(tau_steps),
                     "significant": all(s["margin"] > 2 * s["se_diff"] for s in tau_steps)},
        "proximity": {"by_tau": prox, "holds": ok(prox.values())
                      and all(v["margin"] > 0 or v["status"] == "tie" for v in prox.values())},
    }


def load_report(out_dir: Union[str, Path]) -> ReportBundle:
    """Rebuild a :class:`ReportBundle` from a run directory's CSVs and manifest."""
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / "manifest.json").read_text(encoding="utf-8"))
    units = manifest["units"]
    scale = 1.0 if units == "nats" else math.log(2.0)
    labels = [REFERENCE, CONVENTIONAL] + [SamplerConfig(t).label for t in manifest["taus"]]
    conditions = {}
    for label in labels:
        with open(out_dir / f"events_{label}.csv", encoding="utf-8", newline="") as fh:
            eps = np.array([float(r["epsilon"]) for r in csv.DictReader(fh)]) * scale
        with open(out_dir / f"sequences_{label}.csv", encoding="utf-8", newline="") as fh:
            ids = np.array([float(r["id"]) for r in csv.DictReader(fh)]) * scale
        tau = None
        if label.startswith("Typical@"):
            tau = float(label.split("@", 1)[1])
        conditions[label] = Condition(label, tau, eps, ids,
                                      manifest.get("truncated", {}).get(label, 0))
    return ReportBundle(conditions, manifest["expected_id"] * scale,
                        manifest["expected_id_se"] * scale, units, manifest)
