"""Time quantization and the v1-v5 MIDI-to-token / beat-to-token encodings.

Input grammar per note event (times are absolute within the segment):

    v1      ON<p> T<t>
    v2, v5  ON<p> T<t>            OFF<p> T<t>
    v3, v4  ON<p> T<t> VEL<v>     OFF<p> T<t>

Target grammar per beat, wrapped in BOS ... EOS:

    v1-v3   B<counter> T<t>
    v4, v5  DB T<t> (downbeat) | B T<t>
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from enum import Enum

from beatgrid.errors import ConfigError, CounterOverflow, OutOfWindow
from beatgrid.midi import BeatEvent, Note
from beatgrid.pipeline import Segment

ALLOWED_STEPS = (0.005, 0.010, 0.020, 0.050, 0.100, 0.200)

PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIALS = ("PAD", "BOS", "EOS", "UNK")


class Scheme(str, Enum):
    V1 = "v1"
    V2 = "v2"
    V3 = "v3"
    V4 = "v4"
    V5 = "v5"

    @property
    def has_offsets(self) -> bool:
        return self is not Scheme.V1

    @property
    def has_velocity(self) -> bool:
        return self in (Scheme.V3, Scheme.V4)

    @property
    def has_counters(self) -> bool:
        return self in (Scheme.V1, Scheme.V2, Scheme.V3)


@dataclass(frozen=True, slots=True)
class CodecConfig:
    scheme: Scheme = Scheme.V3
    step: float = 0.010
    segment_length: float = 10.0
    max_counter: int = 12

    def __post_init__(self) -> None:
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not any(math.isclose(self.step, s) for s in ALLOWED_STEPS):
            raise ConfigError(f"codec: step {self.step} not in {ALLOWED_STEPS}")
        if self.segment_length <= 0 or self.length_us % self.step_us:
            raise ConfigError("codec: segment_length must be a positive multiple of step")
        if self.max_counter < 1:
            raise ConfigError("codec: max_counter must be >= 1")

    @property
    def step_us(self) -> int:
        return round(self.step * 1e6)

    @property
    def length_us(self) -> int:
        return round(self.segment_length * 1e6)

    @property
    def n_time_tokens(self) -> int:
        return self.length_us // self.step_us


def quantize_time(t: float, cfg: CodecConfig) -> int:
    """Index of the nearest grid step, ties rounding up; ``t`` in the last half-step maps to the last index."""
    # snap to whole nanoseconds so decimal ties like 0.015 s stay ties
    t_ns = round(t * 1e9)
    if t_ns < 0 or t_ns > cfg.length_us * 1000:
        raise OutOfWindow(f"time {t} outside [0, {cfg.segment_length}]")
    step_ns = cfg.step_us * 1000
    index = (2 * t_ns + step_ns) // (2 * step_ns)
    return min(index, cfg.n_time_tokens - 1)


def dequantize(index: int, cfg: CodecConfig) -> float:
    return index * cfg.step_us / 1e6


def format_seconds(index: int, cfg: CodecConfig) -> str:
    decimals = 3 if cfg.step_us < 10_000 else 2
    return f"{dequantize(index, cfg):.{decimals}f}"


class Vocabulary:
    """Token inventory for one :class:`CodecConfig`; ids depend on the config only."""

    def __init__(self, cfg: CodecConfig) -> None:
        self.cfg = cfg
        tokens: list[str] = list(SPECIALS)
        self.time_offset = len(tokens)
        tokens += [f"T⟨{format_seconds(i, cfg)}⟩" for i in range(cfg.n_time_tokens)]
        self.on_offset = len(tokens)
        tokens += [f"ON⟨{p}⟩" for p in range(128)]
        self.off_offset = self.vel_offset = -1
        if cfg.scheme.has_offsets:
            self.off_offset = len(tokens)
            tokens += [f"OFF⟨{p}⟩" for p in range(128)]
        if cfg.scheme.has_velocity:
            self.vel_offset = len(tokens) - 1  # VEL<v> sits at vel_offset + v, v >= 1
            tokens += [f"VEL⟨{v}⟩" for v in range(1, 128)]
        self.beat_offset = len(tokens)
        if cfg.scheme.has_counters:
            tokens += [f"B⟨{c}⟩" for c in range(1, cfg.max_counter + 1)]
        else:
            tokens += ["B", "DB"]
        self.tokens = tokens
        self.ids = {tok: i for i, tok in enumerate(tokens)}
        if len(self.ids) != len(tokens):
            raise ConfigError("duplicate token names; step too fine for text rendering")

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    # id helpers
    def time_id(self, index: int) -> int:
        return self.time_offset + index

    def on_id(self, pitch: int) -> int:
        return self.on_offset + pitch

    def off_id(self, pitch: int) -> int:
        return self.off_offset + pitch

    def vel_id(self, velocity: int) -> int:
        return self.vel_offset + velocity

    def beat_id(self, counter: int) -> int:
        """Beat token for a bar position; flag schemes map counter 1 to DB, anything else to B."""
        if self.cfg.scheme.has_counters:
            return self.beat_offset + counter - 1
        return self.beat_offset + (1 if counter == 1 else 0)

    def is_time(self, token_id: int) -> bool:
        return self.time_offset <= token_id < self.time_offset + self.cfg.n_time_tokens

    def is_beat(self, token_id: int) -> bool:
        return self.beat_offset <= token_id < len(self.tokens)

    def beat_counter(self, token_id: int) -> int:
        k = token_id - self.beat_offset
        if self.cfg.scheme.has_counters:
            return k + 1
        return 1 if k == 1 else 0

    def render(self, ids: Iterable[int]) -> str:
        return " ".join(self.tokens[i] if 0 <= i < len(self.tokens) else "UNK" for i in ids)

    def parse(self, text: str) -> list[int]:
        return [self.ids.get(tok, UNK) for tok in text.split()]


def build_vocabulary(cfg: CodecConfig) -> Vocabulary:
    return Vocabulary(cfg)


def encode_input(notes: Sequence[Note], vocab: Vocabulary) -> list[int]:
    cfg = vocab.cfg
    events: list[tuple[int, int, int, int]] = []  # (time index, kind 0=off 1=on, pitch, velocity)
    for n in notes:
        events.append((quantize_time(n.onset, cfg), 1, n.pitch, n.velocity))
        if cfg.scheme.has_offsets:
            events.append((quantize_time(min(n.offset, cfg.segment_length), cfg), 0, n.pitch, 0))
    events.sort()
    ids: list[int] = []
    for t, kind, pitch, velocity in events:
        if kind:
            ids += [vocab.on_id(pitch), vocab.time_id(t)]
            if cfg.scheme.has_velocity:
                ids.append(vocab.vel_id(velocity))
        else:
            ids += [vocab.off_id(pitch), vocab.time_id(t)]
    return ids


def encode_target(beats: Sequence[BeatEvent], vocab: Vocabulary) -> list[int]:
    cfg = vocab.cfg
    ids = [BOS]
    for b in sorted(beats, key=lambda b: b.time):
        if b.counter > cfg.max_counter or (cfg.scheme.has_counters and b.counter < 1):
            raise CounterOverflow(f"beat counter {b.counter} outside 1..{cfg.max_counter}")
        ids += [vocab.beat_id(b.counter), vocab.time_id(quantize_time(b.time, cfg))]
    ids.append(EOS)
    return ids


def encode_example(segment: Segment, vocab: Vocabulary) -> tuple[list[int], list[int]]:
    return encode_input(segment.notes, vocab), encode_target(segment.beats, vocab)


def decode_beat_tokens(ids: Iterable[int], vocab: Vocabulary) -> tuple[list[BeatEvent], int]:
    """Leniently recover beats from a target sequence.

    Returns the beats and the number of discarded fragments: beat tokens with
    no following time token, stray tokens, and repeated times.
    """
    cfg = vocab.cfg
    found: list[tuple[int, int]] = []
    discards = 0
    pending: int | None = None
    for tok in ids:
        if tok == EOS:
            break
        if tok in (PAD, BOS):
            continue
        if vocab.is_beat(tok):
            if pending is not None:
                discards += 1
            pending = vocab.beat_counter(tok)
        elif vocab.is_time(tok) and pending is not None:
            found.append((tok - vocab.time_offset, pending))
            pending = None
        else:
            discards += 1
            if pending is not None:
                discards += 1
                pending = None
    if pending is not None:
        discards += 1

    found.sort(key=lambda x: x[0])  # stable: first occurrence of a time wins
    beats: list[BeatEvent] = []
    last = -1
    for index, counter in found:
        if index == last:
            discards += 1
            continue
        beats.append(BeatEvent(dequantize(index, cfg), counter))
        last = index
    return beats, discards
