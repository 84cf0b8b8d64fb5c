"""Typicality analysis for monophonic symbolic music.

Tokenize melodies, fit an exact n-gram next-token model, sample from it
ancestrally or with locally typical sampling, and measure how event and
sequence information content spreads around the model entropy.
"""

__version__ = "0.1.0"

from .tokenizer import NoteEvent, decode, duration_token_value, encode, encode_duration
from .corpus import Corpus, Piece, generate_toy_corpus, load_jsonl, parse_abc_subset, split
from .model import CallableModel, NGramModel, train
from .metrics import (enumerate_exact, event_entropy, event_ic, expected_id, score_events,
                      sequence_ic)
from .sampling import SamplerConfig, sample_batch, sample_sequence, typical_prune

__all__ = [
    "NoteEvent", "decode", "duration_token_value", "encode", "encode_duration",
    "Corpus", "Piece", "generate_toy_corpus", "load_jsonl", "parse_abc_subset", "split",
    "CallableModel", "NGramModel", "train",
    "enumerate_exact", "event_entropy", "event_ic", "expected_id", "score_events",
    "sequence_ic",
    "SamplerConfig", "sample_batch", "sample_sequence", "typical_prune",
]
