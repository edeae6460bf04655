"""Windowing of pieces into overlapping segments, cleaning, and the dataset CSV."""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Iterable
from dataclasses import dataclass, field
from typing import TextIO

from beatgrid.errors import ConfigError, CsvParseError
from beatgrid.midi import BeatEvent, Note, Piece

CSV_HEADER = ("piece_id", "segment_index", "start", "notes", "beats")

# absorbs float error in window-count arithmetic such as (12.0 - 10.0) / 1.0
_EPS = 1e-9


@dataclass(frozen=True, slots=True)
class PipelineConfig:
    segment_length: float = 10.0
    hop: float = 1.0
    min_beats: int = 1

    def __post_init__(self) -> None:
        if not 0 < self.hop <= self.segment_length:
            raise ConfigError("pipeline: require 0 < hop <= segment_length")
        if self.min_beats < 0:
            raise ConfigError("pipeline: min_beats must be >= 0")


@dataclass(slots=True)
class Segment:
    """A window of a piece with note and beat times relative to ``start``."""

    piece_id: str
    index: int
    start: float
    notes: list[Note] = field(default_factory=list)
    beats: list[BeatEvent] = field(default_factory=list)


def window_starts(duration: float, length: float, hop: float) -> list[float]:
    if duration <= 0:
        return []
    if duration < length:
        return [0.0]
    count = math.floor((duration - length) / hop + _EPS) + 1
    return [k * hop for k in range(count)]


def cut_window(piece: Piece, start: float, length: float, index: int = 0) -> Segment:
    """Extract one window; notes belong by onset, offsets are clipped to the window end."""
    end = start + length
    notes = [
        Note(n.pitch, n.onset - start, min(n.offset, end) - start, n.velocity)
        for n in piece.notes
        if start <= n.onset < end
    ]
    beats = [BeatEvent(b.time - start, b.counter) for b in piece.beats if start <= b.time < end]
    return Segment(piece.id, index, start, notes, beats)


def segment_piece(piece: Piece, cfg: PipelineConfig) -> list[Segment]:
    if not piece.notes and not piece.beats:
        return []
    starts = window_starts(piece.duration, cfg.segment_length, cfg.hop)
    return [cut_window(piece, s, cfg.segment_length, i) for i, s in enumerate(starts)]


def clean_segments(segments: Iterable[Segment], cfg: PipelineConfig) -> list[Segment]:
    """Drop segments with fewer than ``min_beats`` beats or without any note."""
    return [s for s in segments if len(s.beats) >= cfg.min_beats and s.notes]


# --------------------------------------------------------------------------
# CSV


def _fmt(t: float) -> str:
    return f"{t:.3f}"


def _row(seg: Segment) -> list[str]:
    notes = ";".join(
        f"{_fmt(n.onset)}:{_fmt(n.offset)}:{n.pitch}:{n.velocity}" for n in seg.notes
    )
    beats = ";".join(f"{_fmt(b.time)}:{b.counter}" for b in seg.beats)
    return [seg.piece_id, str(seg.index), _fmt(seg.start), notes, beats]


def write_segments_csv(segments: Iterable[Segment], stream: TextIO) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for seg in segments:
        writer.writerow(_row(seg))


def _parse_notes(field_: str) -> list[Note]:
    notes = []
    for item in filter(None, field_.split(";")):
        onset, offset, pitch, velocity = item.split(":")
        notes.append(Note(int(pitch), float(onset), float(offset), int(velocity)))
    return notes


def _parse_beats(field_: str) -> list[BeatEvent]:
    beats = []
    for item in filter(None, field_.split(";")):
        time, counter = item.split(":")
        beats.append(BeatEvent(float(time), int(counter)))
    return beats


def read_segments_csv(stream: TextIO) -> list[Segment]:
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        raise CsvParseError("empty file, expected header", 1)
    if tuple(header) != CSV_HEADER:
        raise CsvParseError(f"unexpected header {header!r}", 1)
    segments = []
    for row in reader:
        if not row:
            continue
        try:
            if len(row) != len(CSV_HEADER):
                raise ValueError(f"expected {len(CSV_HEADER)} fields, got {len(row)}")
            piece_id, index, start, notes, beats = row
            segments.append(
                Segment(piece_id, int(index), float(start), _parse_notes(notes), _parse_beats(beats))
            )
        except ValueError as exc:
            raise CsvParseError(str(exc), reader.line_num) from None
    return segments


def dumps(segments: Iterable[Segment]) -> str:
    buf = io.StringIO()
    write_segments_csv(segments, buf)
    return buf.getvalue()


def loads(text: str) -> list[Segment]:
    return read_segments_csv(io.StringIO(text, newline=""))
