"""Standard MIDI File reading/writing and beat annotation I/O.

The reader follows PrettyMIDI semantics: a tempo map converts ticks to
seconds, note-on with velocity 0 is a note-off, all channels are merged into
one note list, and beats are metronome clicks derived from the tempo and
time-signature map (4/4 when the file has no time signature).
"""

from __future__ import annotations

import bisect
import math
import struct
import warnings
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

from beatgrid.errors import (
    CounterOutOfRange,
    DanglingNoteOn,
    MalformedFile,
    NonMonotonicTime,
    ParseError,
    UnsupportedFormat,
)

DEFAULT_TEMPO = 500_000  # microseconds per quarter note (120 BPM)
DEFAULT_MAX_COUNTER = 12
MAX_BEATS = 1_000_000


@dataclass(frozen=True, slots=True)
class Note:
    pitch: int
    onset: float
    offset: float
    velocity: int = 64

    def sort_key(self) -> tuple[float, int, float, int]:
        return (self.onset, self.pitch, self.offset, self.velocity)


@dataclass(frozen=True, slots=True)
class BeatEvent:
    """An annotated beat.

    ``counter`` is the 1-based position in the bar, so 1 marks a downbeat.
    Counter 0 is reserved for predicted beats whose bar position is unknown
    (flag-style targets), which are treated as plain non-downbeat beats.
    """

    time: float
    counter: int

    @property
    def is_downbeat(self) -> bool:
        return self.counter == 1


@dataclass(slots=True)
class Piece:
    id: str
    notes: list[Note] = field(default_factory=list)
    beats: list[BeatEvent] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.notes = sorted(self.notes, key=Note.sort_key)
        self.beats = sorted(self.beats, key=lambda b: b.time)

    @property
    def duration(self) -> float:
        """End of the last note or beat, in seconds."""
        ends = [n.offset for n in self.notes] + [b.time for b in self.beats]
        return max(ends, default=0.0)


# --------------------------------------------------------------------------
# reading


class _Reader:
    __slots__ = ("data", "pos", "end")

    def __init__(self, data: bytes, pos: int, end: int) -> None:
        self.data = data
        self.pos = pos
        self.end = end

    def byte(self) -> int:
        if self.pos >= self.end:
            raise MalformedFile("unexpected end of track data")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def take(self, n: int) -> bytes:
        if self.pos + n > self.end:
            raise MalformedFile("event runs past end of track")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def varlen(self) -> int:
        value = 0
        for _ in range(4):
            b = self.byte()
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise MalformedFile("variable-length quantity longer than 4 bytes")


@dataclass(slots=True)
class _TrackEvents:
    notes: list[tuple[int, int, int, int, int]]  # (tick, kind, channel, pitch, velocity); kind 1=on, 0=off
    tempos: list[tuple[int, int]]
    time_signatures: list[tuple[int, int, int]]
    last_tick: int


_DATA_LENGTHS = {0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2}


def _read_track(reader: _Reader) -> _TrackEvents:
    tick = 0
    running: int | None = None
    notes: list[tuple[int, int, int, int, int]] = []
    tempos: list[tuple[int, int]] = []
    sigs: list[tuple[int, int, int]] = []
    while reader.pos < reader.end:
        tick += reader.varlen()
        status = reader.byte()
        if status == 0xFF:
            running = None
            meta_type = reader.byte()
            payload = reader.take(reader.varlen())
            if meta_type == 0x51:
                if len(payload) != 3:
                    raise MalformedFile("tempo meta event must carry 3 bytes")
                tempo = int.from_bytes(payload, "big")
                if tempo == 0:
                    raise MalformedFile("zero tempo")
                tempos.append((tick, tempo))
            elif meta_type == 0x58:
                if len(payload) < 2:
                    raise MalformedFile("time signature meta event too short")
                numerator, denom_pow = payload[0], payload[1]
                if numerator == 0 or denom_pow > 6:
                    raise MalformedFile("invalid time signature")
                sigs.append((tick, numerator, 2**denom_pow))
            elif meta_type == 0x2F:
                break
            continue
        if status in (0xF0, 0xF7):
            running = None
            reader.take(reader.varlen())
            continue
        if status & 0x80:
            if status >= 0xF0:
                raise MalformedFile(f"system message 0x{status:02X} not allowed in a track")
            running = status
            first = reader.byte()
        else:
            if running is None:
                raise MalformedFile("data byte without running status")
            first = status
            status = running
        kind = status & 0xF0
        data = [first]
        if _DATA_LENGTHS[kind] == 2:
            data.append(reader.byte())
        if any(b & 0x80 for b in data):
            raise MalformedFile("data byte with high bit set")
        channel = status & 0x0F
        if kind == 0x90 and data[1] > 0:
            notes.append((tick, 1, channel, data[0], data[1]))
        elif kind in (0x80, 0x90):
            notes.append((tick, 0, channel, data[0], 0))
    return _TrackEvents(notes, tempos, sigs, tick)


class TempoMap:
    """Piecewise-constant tempo map converting ticks to seconds."""

    def __init__(self, tempos: Iterable[tuple[int, int]], ppq: int) -> None:
        changes: dict[int, int] = {0: DEFAULT_TEMPO}
        for tick, tempo in sorted(tempos, key=lambda x: x[0]):
            changes[tick] = tempo
        self.ppq = ppq
        self.ticks = sorted(changes)
        self.tempos = [changes[t] for t in self.ticks]
        self.seconds = [0.0]
        for i in range(1, len(self.ticks)):
            span = self.ticks[i] - self.ticks[i - 1]
            self.seconds.append(self.seconds[-1] + span * self.tempos[i - 1] / (1e6 * ppq))

    def to_seconds(self, tick: float) -> float:
        i = bisect.bisect_right(self.ticks, tick) - 1
        return self.seconds[i] + (tick - self.ticks[i]) * self.tempos[i] / (1e6 * self.ppq)


def _beat_ticks(
    sigs: list[tuple[int, int, int]], ppq: int, end_tick: int
) -> list[tuple[float, int]]:
    by_tick: dict[int, tuple[int, int]] = {}
    for tick, num, den in sorted(sigs, key=lambda s: s[0]):
        by_tick[tick] = (num, den)
    by_tick.setdefault(0, (4, 4))
    starts = sorted(by_tick)
    beats: list[tuple[float, int]] = []
    for i, start in enumerate(starts):
        stop = starts[i + 1] if i + 1 < len(starts) else end_tick
        num, den = by_tick[start]
        step = ppq * 4 / den
        per_bar = num
        if num % 3 == 0 and num > 3:  # compound meter: beat is a dotted note
            step *= 3
            per_bar = num // 3
        if (min(stop, end_tick) - start) / step > MAX_BEATS:
            raise MalformedFile("beat grid implausibly long")
        k = 0
        while True:
            tick = start + k * step
            if tick >= stop or tick >= end_tick:
                break
            beats.append((tick, k % per_bar + 1))
            k += 1
    return beats


def parse_midi_file(data: bytes, piece_id: str = "") -> Piece:
    """Parse an SMF (format 0 or 1) byte stream into a :class:`Piece`.

    Raises :class:`MalformedFile` or :class:`UnsupportedFormat`; dangling
    note-ons are closed at the last event time with a :class:`DanglingNoteOn`
    warning.
    """
    data = bytes(data)
    if len(data) < 14 or data[:4] != b"MThd":
        raise MalformedFile("missing MThd header")
    header_len = struct.unpack(">I", data[4:8])[0]
    if header_len < 6 or 8 + header_len > len(data):
        raise MalformedFile("bad header length")
    fmt, ntracks, division = struct.unpack(">HHH", data[8:14])
    if fmt == 2:
        raise UnsupportedFormat("SMF format 2 is not supported")
    if fmt > 2:
        raise MalformedFile(f"unknown SMF format {fmt}")
    if division & 0x8000:
        raise UnsupportedFormat("SMPTE time division is not supported")
    if division == 0:
        raise MalformedFile("zero ticks per quarter note")
    ppq = division

    tracks: list[_TrackEvents] = []
    pos = 8 + header_len
    while pos < len(data) and len(tracks) < ntracks:
        if pos + 8 > len(data):
            raise MalformedFile("truncated chunk header")
        chunk_type = data[pos : pos + 4]
        (length,) = struct.unpack(">I", data[pos + 4 : pos + 8])
        body = pos + 8
        if body + length > len(data):
            raise MalformedFile("chunk length exceeds file size")
        if chunk_type == b"MTrk":
            tracks.append(_read_track(_Reader(data, body, body + length)))
        pos = body + length
    if len(tracks) != ntracks:
        raise MalformedFile(f"header declares {ntracks} tracks, found {len(tracks)}")

    tempo_map = TempoMap((t for tr in tracks for t in tr.tempos), ppq)
    end_tick = max((tr.last_tick for tr in tracks), default=0)

    notes: list[Note] = []
    dangling = 0
    for track in tracks:
        active: dict[tuple[int, int], tuple[int, int]] = {}
        for tick, kind, channel, pitch, velocity in track.notes:
            key = (channel, pitch)
            if key in active:
                start, vel = active.pop(key)
                if tick > start:
                    notes.append(
                        Note(pitch, tempo_map.to_seconds(start), tempo_map.to_seconds(tick), vel)
                    )
            if kind == 1:
                active[key] = (tick, velocity)
        for (_, pitch), (start, vel) in active.items():
            dangling += 1
            if end_tick > start:
                notes.append(
                    Note(pitch, tempo_map.to_seconds(start), tempo_map.to_seconds(end_tick), vel)
                )
    if dangling:
        warnings.warn(
            f"{dangling} note-on event(s) without note-off closed at end of file",
            DanglingNoteOn,
            stacklevel=2,
        )

    sigs = [s for tr in tracks for s in tr.time_signatures]
    beats = [BeatEvent(tempo_map.to_seconds(t), c) for t, c in _beat_ticks(sigs, ppq, end_tick)]
    return Piece(piece_id, notes, beats)


# --------------------------------------------------------------------------
# writing


def _varlen(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def encode_track(events: Iterable[tuple[int, bytes]]) -> bytes:
    """Serialize ``(absolute_tick, message_bytes)`` pairs into an MTrk chunk.

    Events are stably sorted by tick; an end-of-track meta event is appended
    at the last tick.
    """
    body = bytearray()
    last = 0
    for tick, msg in sorted(events, key=lambda e: e[0]):
        body += _varlen(tick - last) + msg
        last = tick
    body += b"\x00\xff\x2f\x00"
    return b"MTrk" + struct.pack(">I", len(body)) + bytes(body)


def encode_smf(tracks: Sequence[Iterable[tuple[int, bytes]]], ppq: int = 480, fmt: int = 1) -> bytes:
    header = b"MThd" + struct.pack(">IHHH", 6, fmt, len(tracks), ppq)
    return header + b"".join(encode_track(t) for t in tracks)


def tempo_event(tempo_us: int) -> bytes:
    return b"\xff\x51\x03" + tempo_us.to_bytes(3, "big")


def time_signature_event(numerator: int, denominator: int) -> bytes:
    return bytes([0xFF, 0x58, 0x04, numerator, int(math.log2(denominator)), 24, 8])


def write_midi(
    notes: Iterable[Note],
    *,
    bpm: float = 120.0,
    time_signature: tuple[int, int] = (4, 4),
    end_time: float | None = None,
    ppq: int = 480,
    channel: int = 0,
) -> bytes:
    """Write notes as a constant-tempo, format-0 SMF."""
    tempo_us = round(60e6 / bpm)
    ticks_per_second = ppq * 1e6 / tempo_us

    def tick(t: float) -> int:
        return round(t * ticks_per_second)

    events: list[tuple[int, bytes]] = [
        (0, tempo_event(tempo_us)),
        (0, time_signature_event(*time_signature)),
    ]
    offs: list[tuple[int, bytes]] = []
    ons: list[tuple[int, bytes]] = []
    last = 0
    for note in notes:
        on = tick(note.onset)
        off = max(tick(note.offset), on + 1)
        ons.append((on, bytes([0x90 | channel, note.pitch, note.velocity])))
        offs.append((off, bytes([0x80 | channel, note.pitch, 0])))
        last = max(last, off)
    if end_time is not None:
        last = max(last, tick(end_time))
    # offs precede ons at equal ticks so a re-struck pitch is not cut short
    events += offs + ons
    events.append((last, b"\xff\x01\x00"))  # empty text event pins the end tick
    return encode_smf([events], ppq=ppq, fmt=0)


# --------------------------------------------------------------------------
# beat TSV


def load_beat_tsv(text: str, max_counter: int = DEFAULT_MAX_COUNTER) -> list[BeatEvent]:
    """Parse ``time<TAB>counter`` lines; ``#`` lines and blank lines are skipped."""
    beats: list[BeatEvent] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(f"line {lineno}: expected 2 tab-separated fields")
        try:
            time = float(parts[0])
            counter = int(parts[1])
        except ValueError as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
        if not math.isfinite(time) or time < 0:
            raise ParseError(f"line {lineno}: invalid time {parts[0]!r}")
        if not 0 <= counter <= max_counter:
            raise CounterOutOfRange(f"line {lineno}: counter {counter} outside 0..{max_counter}")
        if beats and time <= beats[-1].time:
            raise NonMonotonicTime(f"line {lineno}: time {time} does not increase")
        beats.append(BeatEvent(time, counter))
    return beats


def dump_beat_tsv(beats: Iterable[BeatEvent]) -> str:
    lines = ["# time\tcounter"]
    lines += [f"{b.time:.3f}\t{b.counter}" for b in beats]
    return "\n".join(lines) + "\n"
