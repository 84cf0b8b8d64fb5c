"""Command-line entry point: ``python -m typicality <subcommand>``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import corpus as corpus_io
from .errors import TypicalityError
from .experiment import compare_conditions, load_config, run_experiment
from .metrics import SequenceTypicality, mean_and_se, score_events, write_event_csv, write_sequence_csv
from .model import NGramModel, train
from .sampling import SamplerConfig, batch_meta, read_token_jsonl, sample_batch, write_token_jsonl

log = logging.getLogger("typicality")


def _out(args, default: str) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out / default


def cmd_gen_toy_corpus(args):
    corpus = corpus_io.generate_toy_corpus(args.n_pieces, args.seed if args.seed is not None else 2022)
    path = _out(args, "toy_corpus.jsonl")
    corpus_io.dump_jsonl(corpus, path)
    log.info("wrote %d pieces to %s", len(corpus), path)


def _load_filtered(args) -> tuple[corpus_io.Corpus, list[list[int]]]:
    corpus = corpus_io.load_corpus(args.corpus, args.format)
    tokens = corpus.tokens()
    if args.max_len is not None:
        keep = [i for i, t in enumerate(tokens) if len(t) <= args.max_len]
        corpus = corpus_io.Corpus([corpus.pieces[i] for i in keep], corpus.meta)
        tokens = [tokens[i] for i in keep]
    return corpus, tokens


def cmd_tokenize(args):
    corpus, tokens = _load_filtered(args)
    path = _out(args, "tokens.jsonl")
    write_token_jsonl(path, list(zip(corpus.ids, tokens)),
                      meta={"source": str(args.corpus), **corpus.meta})
    log.info("tokenized %d pieces into %s", len(corpus), path)


def cmd_split(args):
    corpus, _ = _load_filtered(args)
    assignment = corpus_io.split(corpus, args.split_seed)
    path = _out(args, "splits.csv")
    corpus_io.write_split_csv(assignment, path)
    log.info("wrote split manifest %s", path)


def _training_sequences(args) -> list[list[int]]:
    tf = read_token_jsonl(args.tokens)
    if args.splits:
        assignment = corpus_io.read_split_csv(args.splits)
        return [s for pid, s in zip(tf.ids, tf.sequences) if assignment.get(pid) == corpus_io.TRAIN]
    return tf.sequences


def cmd_train(args):
    model = train(_training_sequences(args), args.order, args.alpha)
    path = _out(args, "model.json")
    model.save(path)
    log.info("trained order-%d model on %d tokens -> %s", model.order, model.total_tokens, path)


def cmd_sample(args):
    model = NGramModel.load(args.model)
    config = SamplerConfig(args.tau, args.max_len, args.seed or 0)
    samples = sample_batch(model, config, args.count, workers=args.workers)
    path = _out(args, f"samples_{config.label}.jsonl")
    write_token_jsonl(path, [(f"{config.label}-{i:05d}", s.tokens) for i, s in enumerate(samples)],
                      meta=batch_meta(config, model.digest(), samples),
                      truncated=[s.truncated for s in samples])
    log.info("wrote %d samples to %s", len(samples), path)


def cmd_analyze(args):
    model = NGramModel.load(args.model)
    tf = read_token_jsonl(args.tokens)
    rows, seqs = [], []
    for pid, toks, trunc in zip(tf.ids, tf.sequences, tf.truncated):
        ic, ent = score_events(model, toks, trunc)
        rows.append((pid, toks, ic, ent))
        seqs.append((pid, SequenceTypicality(math.fsum(ic), len(ic))))
    if args.expected_id is not None:
        e_id = args.expected_id
    else:
        e_id, _ = mean_and_se([s.id for _, s in seqs])
    stem = Path(args.tokens).stem
    write_event_csv(_out(args, f"events_{stem}.csv"), rows, args.units)
    write_sequence_csv(_out(args, f"sequences_{stem}.csv"),
                       [(pid, s.against(e_id)) for pid, s in seqs], args.units)


def cmd_report(args):
    if not args.config:
        raise SystemExit("report needs --config")
    config = load_config(args.config, seed=args.seed, units=args.units_override,
                         out=str(args.out) if args.out else None, workers=args.workers)
    bundle = run_experiment(config)
    trends = compare_conditions(bundle) if len(bundle.typical) >= 2 else None
    print(f"E[ID] (reference) = {bundle.expected_id:.4f} +/- {bundle.expected_id_se:.4f} nats")
    for label, c in bundle.conditions.items():
        print(f"{label:>14}: {len(c.ids):5d} sequences, {len(c.epsilon_sym):7d} events")
    if trends:
        for name in ("stdev_trend", "id_trend", "proximity"):
            print(f"{name}: {'holds' if trends[name]['holds'] else 'violated'}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--units", choices=["nats", "bits"], default=None, dest="units_override")
    common.add_argument("--config", type=Path, default=None)
    common.add_argument("--out", type=Path, default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="typicality", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-toy-corpus", parents=[common], help="write the synthetic toy corpus")
    p.add_argument("--n-pieces", type=int, default=200)
    p.set_defaults(func=cmd_gen_toy_corpus)

    for name, func, help_ in (("tokenize", cmd_tokenize, "encode a corpus into token JSONL"),
                              ("split", cmd_split, "write a train/validation/test manifest")):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.add_argument("corpus", type=Path)
        p.add_argument("--format", choices=["jsonl", "abc"], default=None)
        p.add_argument("--max-len", type=int, default=None, help="drop pieces longer than this")
        p.add_argument("--split-seed", type=int, default=0)
        p.set_defaults(func=func)

    p = sub.add_parser("train", parents=[common], help="fit an n-gram model on token JSONL")
    p.add_argument("tokens", type=Path)
    p.add_argument("--splits", type=Path, default=None, help="train only on the train split")
    p.add_argument("--order", type=int, default=5)
    p.add_argument("--alpha", type=float, default=1.0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", parents=[common], help="draw sequences from a model")
    p.add_argument("model", type=Path)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--tau", type=float, default=None, help="typical sampling threshold")
    p.add_argument("--max-len", type=int, default=1024)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("analyze", parents=[common], help="per-event and per-sequence metrics")
    p.add_argument("model", type=Path)
    p.add_argument("tokens", type=Path)
    p.add_argument("--expected-id", type=float, default=None,
                   help="reference E[ID] in nats (default: mean over the input)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", parents=[common], help="run the full experiment from --config")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    args.units = args.units_override or "nats"
    try:
        args.func(args)
    except (TypicalityError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
