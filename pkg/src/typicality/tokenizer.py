"""Event tokenizer for monophonic melodies.

Vocabulary layout (230 ids, frozen because serialized corpora depend on it)::

    0..127   change-pitch tokens, MIDI pitch 0 (C-1) .. 127 (G9)
    128      rest
    129..228 duration tokens d_0..d_99, d_i = 10 * (i + 1) ms
    229      end of sequence

A note is written as its pitch (or rest) token followed by one or more
duration tokens. Durations longer than one second are split into 1000 ms
chunks followed by a nearest-bin remainder.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .errors import MalformedInputError, TokenParseError

N_PITCHES = 128
N_DURATIONS = 100
REST = 128
DURATION_OFFSET = 129
EOS = 229
VOCAB_SIZE = 230

MIN_DURATION_MS = 10
MAX_DURATION_MS = 1000
# gaps shorter than the smallest bin are dropped rather than turned into rests
MIN_GAP_MS = MIN_DURATION_MS


@dataclass(frozen=True)
class NoteEvent:
    """A pitched note (``pitch`` = MIDI number) or a rest (``pitch is None``)."""

    pitch: Optional[int]
    onset_ms: int
    dur_ms: int

    def __post_init__(self):
        if self.pitch is not None and not 0 <= self.pitch < N_PITCHES:
            raise ValueError(f"pitch out of range: {self.pitch}")
        if self.onset_ms < 0:
            raise ValueError(f"negative onset: {self.onset_ms}")
        if self.dur_ms < 1:
            raise ValueError(f"duration must be >= 1 ms, got {self.dur_ms}")

    @property
    def is_rest(self) -> bool:
        return self.pitch is None

    @property
    def end_ms(self) -> int:
        return self.onset_ms + self.dur_ms

    @classmethod
    def rest(cls, onset_ms: int, dur_ms: int) -> "NoteEvent":
        return cls(None, onset_ms, dur_ms)


def is_pitch(token: int) -> bool:
    return 0 <= token < N_PITCHES


def is_rest(token: int) -> bool:
    return token == REST


def is_duration(token: int) -> bool:
    return DURATION_OFFSET <= token < DURATION_OFFSET + N_DURATIONS


def is_eos(token: int) -> bool:
    return token == EOS


def duration_token(index: int) -> int:
    """Token id of duration bin ``index``."""
    if not 0 <= index < N_DURATIONS:
        raise ValueError(f"duration index out of range: {index}")
    return DURATION_OFFSET + index


def duration_token_value(index: int) -> int:
    """Milliseconds represented by duration bin ``index`` (0..99)."""
    if isinstance(index, bool) or not 0 <= index < N_DURATIONS:
        raise ValueError(f"duration index out of range: {index}")
    return MIN_DURATION_MS * (index + 1)


def token_duration_ms(token: int) -> int:
    if not is_duration(token):
        raise ValueError(f"not a duration token: {token}")
    return duration_token_value(token - DURATION_OFFSET)


def encode_duration(dur_ms: int) -> list[int]:
    """Duration tokens for ``dur_ms``.

    Whole seconds become ``d_99`` chunks; the remainder goes to the nearest
    bin with ties rounding up. Remainders under 5 ms are dropped unless
    nothing has been emitted, in which case ``d_0`` is used so no note
    disappears.
    """
    if dur_ms <= 0:
        raise ValueError(f"duration must be positive, got {dur_ms}")
    n_full, rem = divmod(int(dur_ms), MAX_DURATION_MS)
    tokens = [duration_token(N_DURATIONS - 1)] * n_full
    if rem >= MIN_DURATION_MS // 2:
        index = min((rem + MIN_DURATION_MS // 2) // MIN_DURATION_MS - 1, N_DURATIONS - 1)
        tokens.append(duration_token(max(index, 0)))
    elif not tokens:
        tokens.append(duration_token(0))
    return tokens


def check_monophonic(events: Sequence[NoteEvent]) -> None:
    for i in range(1, len(events)):
        prev, cur = events[i - 1], events[i]
        if cur.onset_ms < prev.onset_ms:
            raise MalformedInputError(f"event {i} is not sorted by onset")
        if cur.onset_ms < prev.end_ms:
            raise MalformedInputError(f"event {i} overlaps event {i - 1}")


def encode(events: Sequence[NoteEvent]) -> list[int]:
    """Token ids for a monophonic event list, terminated by EOS.

    Silent gaps of at least 10 ms between consecutive events become rest
    events. Silence before the first event is not encoded.
    """
    check_monophonic(events)
    tokens: list[int] = []
    prev_end = None
    for ev in events:
        if prev_end is not None and ev.onset_ms - prev_end >= MIN_GAP_MS:
            tokens.append(REST)
            tokens.extend(encode_duration(ev.onset_ms - prev_end))
        tokens.append(REST if ev.is_rest else ev.pitch)
        tokens.extend(encode_duration(ev.dur_ms))
        prev_end = ev.end_ms
    tokens.append(EOS)
    return tokens


def decode(tokens: Sequence[int]) -> list[NoteEvent]:
    """Inverse of :func:`encode`. Onsets are rebuilt from durations starting at 0."""
    events: list[NoteEvent] = []
    head: Optional[int] = None
    head_index = -1
    dur = 0
    onset = 0

    def flush():
        nonlocal onset
        if head is None:
            return
        if dur == 0:
            raise TokenParseError(head_index, "pitch/rest token without a duration")
        events.append(NoteEvent(None if head == REST else head, onset, dur))
        onset += dur

    for i, tok in enumerate(tokens):
        tok = int(tok)
        if not 0 <= tok < VOCAB_SIZE:
            raise TokenParseError(i, f"invalid token id {tok}")
        if is_duration(tok):
            if head is None:
                raise TokenParseError(i, "duration token with no preceding pitch or rest")
            dur += token_duration_ms(tok)
        elif is_eos(tok):
            flush()
            if i != len(tokens) - 1:
                raise TokenParseError(i + 1, "tokens after end of sequence")
            return events
        else:
            flush()
            head, head_index, dur = tok, i, 0
    raise TokenParseError(len(tokens), "missing end-of-sequence token")


def is_well_formed(tokens: Iterable[int]) -> bool:
    try:
        decode(list(tokens))
    except TokenParseError:
        return False
    return True


def describe(token: int) -> str:
    """Short human-readable label, e.g. ``P60``, ``R``, ``D480``, ``EOS``."""
    if is_pitch(token):
        return f"P{token}"
    if is_rest(token):
        return "R"
    if is_duration(token):
        return f"D{token_duration_ms(token)}"
    if is_eos(token):
        return "EOS"
    raise ValueError(f"invalid token id {token}")
