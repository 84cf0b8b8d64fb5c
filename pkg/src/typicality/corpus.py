"""Corpus ingestion, deterministic splits and the synthetic toy corpus.

Canonical JSONL format, one piece per line::

    {"id": "a", "notes": [{"pitch": 60, "onset_ms": 0, "dur_ms": 500}, ...]}

``pitch`` is ``null`` for rests.
"""

from __future__ import annotations

import csv
import hashlib
import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Optional, Sequence, Union

import numpy as np

from .errors import AbcParseError, CorpusLoadError, MalformedInputError
from .tokenizer import NoteEvent, check_monophonic, encode

PathLike = Union[str, Path]

TRAIN, VALIDATION, TEST = "train", "validation", "test"
N_BUCKETS = 12


@dataclass(frozen=True)
class Piece:
    id: str
    events: tuple[NoteEvent, ...]


@dataclass
class Corpus:
    pieces: list[Piece] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for p in self.pieces:
            if p.id in seen:
                raise ValueError(f"duplicate piece id {p.id!r}")
            seen.add(p.id)

    def __len__(self):
        return len(self.pieces)

    def __iter__(self) -> Iterator[Piece]:
        return iter(self.pieces)

    @property
    def ids(self) -> list[str]:
        return [p.id for p in self.pieces]

    def subset(self, ids: Iterable[str]) -> "Corpus":
        keep = set(ids)
        return Corpus([p for p in self.pieces if p.id in keep], dict(self.meta))

    def tokens(self) -> list[list[int]]:
        return [encode(p.events) for p in self.pieces]


# -- JSONL -------------------------------------------------------------------

def _parse_note(raw, lineno: int) -> NoteEvent:
    if not isinstance(raw, dict):
        raise CorpusLoadError(lineno, "note is not an object")
    try:
        pitch, onset, dur = raw["pitch"], raw["onset_ms"], raw["dur_ms"]
    except KeyError as exc:
        raise CorpusLoadError(lineno, f"note missing field {exc.args[0]!r}") from None
    if pitch is not None and (not isinstance(pitch, int) or isinstance(pitch, bool)
                              or not 0 <= pitch <= 127):
        raise CorpusLoadError(lineno, f"pitch out of range: {pitch!r}")
    for name, value in (("onset_ms", onset), ("dur_ms", dur)):
        if not isinstance(value, int) or isinstance(value, bool):
            raise CorpusLoadError(lineno, f"{name} must be an integer, got {value!r}")
    try:
        return NoteEvent(pitch, onset, dur)
    except ValueError as exc:
        raise CorpusLoadError(lineno, str(exc)) from None


def parse_jsonl_lines(lines: Iterable[str]) -> Corpus:
    pieces: list[Piece] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusLoadError(lineno, f"malformed JSON: {exc.msg}") from None
        if not isinstance(obj, dict) or "id" not in obj or "notes" not in obj:
            raise CorpusLoadError(lineno, "expected an object with 'id' and 'notes'")
        pid = obj["id"]
        if not isinstance(pid, str):
            raise CorpusLoadError(lineno, "piece id must be a string")
        if pid in seen:
            raise CorpusLoadError(lineno, f"duplicate piece id {pid!r}")
        if not isinstance(obj["notes"], list) or not obj["notes"]:
            raise CorpusLoadError(lineno, "piece has no notes")
        events = sorted((_parse_note(n, lineno) for n in obj["notes"]),
                        key=lambda e: e.onset_ms)
        try:
            check_monophonic(events)
        except MalformedInputError as exc:
            raise CorpusLoadError(lineno, str(exc)) from None
        seen.add(pid)
        pieces.append(Piece(pid, tuple(events)))
    return Corpus(pieces)


def load_jsonl(path: PathLike) -> Corpus:
    with open(path, encoding="utf-8") as fh:
        return parse_jsonl_lines(fh)


def dump_jsonl(corpus: Corpus, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for piece in corpus:
            notes = [{"pitch": e.pitch, "onset_ms": e.onset_ms, "dur_ms": e.dur_ms}
                     for e in piece.events]
            fh.write(json.dumps({"id": piece.id, "notes": notes}, separators=(",", ":")))
            fh.write("\n")


# -- ABC subset ----------------------------------------------------------------

_LETTER_OFFSETS = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}
_HEADER_RE = re.compile(r"^([A-Za-z]):(.*)$")
_UNSUPPORTED = {
    "-": "ties unsupported",
    "{": "grace notes unsupported",
    ">": "broken rhythm unsupported",
    "<": "broken rhythm unsupported",
    "&": "multiple voices unsupported",
}


@dataclass
class AbcTune:
    events: list[NoteEvent]
    title: str = ""
    key: str = ""
    meter: Fraction = Fraction(4, 4)
    unit: Fraction = Fraction(1, 8)
    ms_per_whole: Fraction = Fraction(2000)
    # key signatures are read but never applied to note pitches
    key_accidentals_applied: bool = False


def _parse_fraction(text: str, construct: str, offset: int) -> Fraction:
    try:
        num, _, den = text.strip().partition("/")
        return Fraction(int(num), int(den)) if den else Fraction(int(num))
    except (ValueError, ZeroDivisionError):
        raise AbcParseError(construct, offset, f"cannot parse {text.strip()!r}") from None


def _parse_tempo(text: str, offset: int) -> Fraction:
    """Milliseconds per whole note for a ``Q:`` value.

    Accepts ``1/4=120`` or a bare ``120`` (taken as quarter notes per minute).
    """
    text = text.strip()
    m = re.search(r"(?:(\d+/\d+)\s*=\s*)?(\d+)\s*$", text.split('"')[-1])
    if not m:
        raise AbcParseError("tempo field", offset, f"cannot parse {text!r}")
    beat = _parse_fraction(m.group(1), "tempo field", offset) if m.group(1) else Fraction(1, 4)
    bpm = int(m.group(2))
    if bpm <= 0 or beat <= 0:
        raise AbcParseError("tempo field", offset, "tempo must be positive")
    return Fraction(60000, bpm) / beat


def _read_length(body: str, i: int, offset: int) -> tuple[Fraction, int]:
    """Duration multiplier starting at ``body[i]``: ``3``, ``/``, ``//``, ``/4``, ``3/2``."""
    j = i
    while j < len(body) and body[j].isdigit():
        j += 1
    num = int(body[i:j]) if j > i else 1
    if j < len(body) and body[j] == "/":
        k = j + 1
        while k < len(body) and body[k].isdigit():
            k += 1
        if k > j + 1:
            den = int(body[j + 1:k])
            j = k
        else:
            den = 2
            j += 1
            while j < len(body) and body[j] == "/":
                den *= 2
                j += 1
        if den == 0:
            raise AbcParseError("duration", offset, "zero denominator")
        return Fraction(num, den), j
    return Fraction(num), j


def parse_abc_tune(text: str) -> AbcTune:
    """Parse a single-voice ABC tune restricted to notes, rests and bar lines.

    Explicit accidentals carry to later notes of the same letter and octave
    until the next bar line. Chords, ties, tuplets, repeats and grace notes
    raise :class:`AbcParseError` with the byte offset of the construct.
    """
    tune = AbcTune(events=[])
    body_parts: list[tuple[int, str]] = []
    pos = 0
    for raw_line in text.splitlines(keepends=True):
        line_offset = pos
        pos += len(raw_line.encode("utf-8"))
        line = raw_line.rstrip("\r\n")
        m = _HEADER_RE.match(line)
        if m:
            field_name, value = m.group(1), m.group(2).strip()
            if field_name == "T" and not tune.title:
                tune.title = value
            elif field_name == "K":
                tune.key = value
            elif field_name == "M":
                if value in ("C", "C|"):
                    tune.meter = Fraction(4, 4) if value == "C" else Fraction(2, 2)
                elif value.lower() != "none":
                    tune.meter = _parse_fraction(value, "meter field", line_offset)
            elif field_name == "L":
                tune.unit = _parse_fraction(value, "unit length field", line_offset)
                if tune.unit <= 0:
                    raise AbcParseError("unit length field", line_offset, "must be positive")
            elif field_name == "Q":
                tune.ms_per_whole = _parse_tempo(value, line_offset)
            continue
        if line.strip():
            body_parts.append((line_offset, line))

    onset = Fraction(0)
    bar_accidentals: dict[tuple[str, int], int] = {}

    def emit(pitch: Optional[int], length: Fraction, offset: int):
        nonlocal onset
        start_ms = round(onset)
        dur = length * tune.unit * tune.ms_per_whole
        end_ms = round(onset + dur)
        if end_ms - start_ms < 1:
            raise AbcParseError("duration", offset, "note shorter than 1 ms")
        tune.events.append(NoteEvent(pitch, start_ms, end_ms - start_ms))
        onset += dur

    for line_offset, body in body_parts:
        i = 0
        n = len(body)

        def byte_offset(k: int) -> int:
            return line_offset + len(body[:k].encode("utf-8"))

        while i < n:
            c = body[i]
            if c == "%":
                break
            if c in " \t\\`":
                i += 1
            elif c == '"':
                end = body.find('"', i + 1)
                if end < 0:
                    raise AbcParseError("annotation", byte_offset(i), "unterminated string")
                i = end + 1
            elif c == "!" or c == "+":
                end = body.find(c, i + 1)
                if end < 0:
                    raise AbcParseError("decoration", byte_offset(i), "unterminated decoration")
                i = end + 1
            elif c in "~.":
                i += 1
            elif c == "|":
                nxt = body[i + 1] if i + 1 < n else ""
                if nxt == ":" or nxt.isdigit() or (nxt == "[" and i + 2 < n and body[i + 2].isdigit()):
                    raise AbcParseError("repeats unsupported", byte_offset(i))
                bar_accidentals.clear()
                i += 1
                while i < n and body[i] in "|]":
                    i += 1
            elif c == ":":
                raise AbcParseError("repeats unsupported", byte_offset(i))
            elif c == "[":
                nxt = body[i + 1] if i + 1 < n else ""
                if nxt == "|":
                    bar_accidentals.clear()
                    i += 2
                elif nxt.isdigit():
                    raise AbcParseError("repeats unsupported", byte_offset(i))
                elif nxt.isalpha() and i + 2 < n and body[i + 2] == ":":
                    raise AbcParseError("inline fields unsupported", byte_offset(i))
                else:
                    raise AbcParseError("chords unsupported", byte_offset(i))
            elif c == "]":
                i += 1
            elif c == "(":
                if i + 1 < n and body[i + 1].isdigit():
                    raise AbcParseError("tuplets unsupported", byte_offset(i))
                i += 1  # slur start
            elif c == ")":
                i += 1
            elif c in _UNSUPPORTED:
                raise AbcParseError(_UNSUPPORTED[c], byte_offset(i))
            elif c in "zZ":
                start = i
                mult, i = _read_length(body, i + 1, byte_offset(start))
                if c == "Z":
                    mult = mult * tune.meter / tune.unit
                emit(None, mult, byte_offset(start))
            elif c in "^_=" or c.upper() in _LETTER_OFFSETS:
                start = i
                accidental: Optional[int] = None
                if c in "^_=":
                    j = i
                    while j < n and body[j] in "^_=":
                        j += 1
                    acc = body[i:j]
                    table = {"^": 1, "^^": 2, "_": -1, "__": -2, "=": 0}
                    if acc not in table:
                        raise AbcParseError("accidental", byte_offset(i), f"invalid {acc!r}")
                    accidental = table[acc]
                    i = j
                    if i >= n or body[i].upper() not in _LETTER_OFFSETS:
                        raise AbcParseError("accidental", byte_offset(start), "not followed by a note")
                letter = body[i]
                pitch = 60 + _LETTER_OFFSETS[letter.upper()] + (12 if letter.islower() else 0)
                i += 1
                while i < n and body[i] in "',":
                    pitch += 12 if body[i] == "'" else -12
                    i += 1
                key = (letter, pitch)
                if accidental is not None:
                    bar_accidentals[key] = accidental
                pitch += bar_accidentals.get(key, 0)
                if not 0 <= pitch <= 127:
                    raise AbcParseError("pitch out of range", byte_offset(start))
                mult, i = _read_length(body, i, byte_offset(start))
                emit(pitch, mult, byte_offset(start))
            else:
                raise AbcParseError(f"unsupported character {c!r}", byte_offset(i))
    return tune


def parse_abc_subset(text: str) -> list[NoteEvent]:
    return parse_abc_tune(text).events


def load_abc_dir(path: PathLike, pattern: str = "*.abc") -> Corpus:
    """One tune per file; piece ids are file stems."""
    pieces = []
    for f in sorted(Path(path).glob(pattern)):
        events = parse_abc_subset(f.read_text(encoding="utf-8"))
        if not events:
            raise CorpusLoadError(1, f"{f.name}: tune has no notes")
        pieces.append(Piece(f.stem, tuple(events)))
    return Corpus(pieces, {"key_accidentals_applied": False})


def load_corpus(path: PathLike, fmt: Optional[str] = None) -> Corpus:
    path = Path(path)
    if fmt is None:
        fmt = "abc" if path.is_dir() or path.suffix == ".abc" else "jsonl"
    if fmt == "jsonl":
        return load_jsonl(path)
    if fmt == "abc":
        if path.is_dir():
            return load_abc_dir(path)
        events = parse_abc_subset(path.read_text(encoding="utf-8"))
        return Corpus([Piece(path.stem, tuple(events))], {"key_accidentals_applied": False})
    raise ValueError(f"unknown corpus format {fmt!r}")


# -- splits --------------------------------------------------------------------

def split_bucket(piece_id: str, split_seed: int) -> int:
    digest = hashlib.sha256(f"{split_seed}\x00{piece_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little") % N_BUCKETS


def split(corpus: Union[Corpus, Sequence[str]], split_seed: int = 0) -> dict[str, str]:
    """Assign each piece to train (10/12), validation (1/12) or test (1/12)."""
    ids = corpus.ids if isinstance(corpus, Corpus) else list(corpus)
    out = {}
    for pid in ids:
        b = split_bucket(pid, split_seed)
        out[pid] = TRAIN if b < 10 else VALIDATION if b == 10 else TEST
    return out


def write_split_csv(assignment: dict[str, str], path: PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["piece_id", "split"])
        for pid, part in assignment.items():
            w.writerow([pid, part])


def read_split_csv(path: PathLike) -> dict[str, str]:
    with open(path, encoding="utf-8", newline="") as fh:
        return {row["piece_id"]: row["split"] for row in csv.DictReader(fh)}


# -- toy corpus ----------------------------------------------------------------

_MAJOR = (0, 2, 4, 5, 7, 9, 11)
# tonic MIDI pitch and weight; D and G dominate like in folk session tunes
TOY_KEYS = ((62, 0.35), (55, 0.35), (57, 0.15), (60, 0.15))
# one 4/4 bar at quarter = 500 ms
TOY_RHYTHMS = (
    (250,) * 8,
    (500, 250, 250, 500, 250, 250),
    (750, 250, 500, 500),
    (500, 500, 500, 500),
    (250, 250, 500, 250, 250, 500),
)
TOY_RHYTHM_WEIGHTS = (0.3, 0.25, 0.15, 0.15, 0.15)
TOY_CADENCE = (500, 500, 1000)
TOY_FINAL_CADENCE = (500, 500, 2000)


TOY_STEPS = np.array([-2, -1, 0, 1, 2])
# step weights given the previous step's direction (down, none, up)
TOY_STEP_WEIGHTS = {
    -1: np.array([0.10, 0.65, 0.05, 0.15, 0.05]),
    0: np.array([0.10, 0.35, 0.10, 0.35, 0.10]),
    1: np.array([0.05, 0.15, 0.05, 0.65, 0.10]),
}


def _toy_phrase(rng: np.random.Generator, n_bars: int, start: int,
                center: int) -> list[tuple[int, int]]:
    """(scale degree, duration) pairs for a phrase without its cadence bar.

    Mostly stepwise with a tendency to keep moving in the current
    direction; weights lean back toward ``center`` so the line stays in a
    singable register.
    """
    notes = []
    degree = start
    direction = 0
    for _ in range(n_bars - 1):
        rhythm = TOY_RHYTHMS[rng.choice(len(TOY_RHYTHMS), p=TOY_RHYTHM_WEIGHTS)]
        for dur in rhythm:
            w = TOY_STEP_WEIGHTS[direction] * np.exp(-0.08 * (degree + TOY_STEPS - center) ** 2)
            step = int(rng.choice(TOY_STEPS, p=w / w.sum()))
            degree += step
            direction = int(np.sign(step))
            notes.append((degree, dur))
    return notes


def _cadence(degree_before: int, target: int, final: bool = False) -> list[tuple[int, int]]:
    approach = target + (1 if degree_before > target else -1)
    durations = TOY_FINAL_CADENCE if final else TOY_CADENCE
    return list(zip((approach + (1 if approach > target else -1), approach, target), durations))


def generate_toy_corpus(n_pieces: int = 200, seed: int = 2022) -> Corpus:
    """Synthetic folk-like melodies standing in for a lead-sheet corpus.

    Each tune is AABB: phrases of 2 to 4 bars built from random walks over a
    major scale with bar-level rhythm templates. The first time through a
    phrase ends on the dominant, the repeat on the tonic; the tune closes on
    a tonic held for a whole bar. About 2% of non-cadence notes are turned into rests.
    """
    rng = np.random.default_rng(seed)
    tonics = [k for k, _ in TOY_KEYS]
    key_p = [w for _, w in TOY_KEYS]
    pieces = []
    for k in range(n_pieces):
        tonic = tonics[rng.choice(len(tonics), p=key_p)]
        body: list[tuple[int, int, bool]] = []
        for section in range(2):
            n_bars = int(rng.integers(2, 5))
            center = 2 + 2 * section
            phrase = _toy_phrase(rng, n_bars, int(rng.choice([0, 2, 4])) + 2 * section, center)
            last = phrase[-1][0] if phrase else 0
            for ending in (4, 0):
                body.extend((d, dur, True) for d, dur in phrase)
                final = section == 1 and ending == 0
                body.extend((d, dur, False) for d, dur in _cadence(last, ending, final))
        onset = 0
        events = []
        for degree, dur, may_rest in body:
            if may_rest and rng.random() < 0.02:
                events.append(NoteEvent(None, onset, dur))
            else:
                octave, deg = divmod(degree, 7)
                events.append(NoteEvent(tonic + 12 * octave + _MAJOR[deg], onset, dur))
            onset += dur
        pieces.append(Piece(f"toy{k:04d}", tuple(events)))
    return Corpus(pieces, {"generator": "toy", "seed": seed})
