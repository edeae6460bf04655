"""Seeded synthetic metronome corpus.

Each piece has a constant tempo in [60, 180] BPM, a 3/4 or 4/4 meter, notes on
most beats plus random off-beat notes, and velocity accents on downbeats.
Pieces round-trip through SMF so in-memory and on-disk corpora agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from beatgrid.midi import Note, Piece, dump_beat_tsv, parse_midi_file, write_midi


@dataclass(frozen=True, slots=True)
class SynthPiece:
    piece: Piece
    midi: bytes
    bpm: float
    meter: int


def synth_piece(
    rng: np.random.Generator,
    piece_id: str,
    *,
    min_duration: float = 10.0,
    max_duration: float = 20.0,
    tempo_range: tuple[float, float] = (60.0, 180.0),
) -> SynthPiece:
    bpm = round(float(rng.uniform(*tempo_range)), 2)
    meter = int(rng.choice([3, 4]))
    period = 60.0 / bpm
    target = rng.uniform(min_duration, max_duration)
    n_beats = max(meter, int(target / period))
    root = int(rng.integers(36, 60))

    notes: list[Note] = []
    for k in range(n_beats):
        t = k * period
        downbeat = k % meter == 0
        if downbeat or rng.random() < 0.85:
            vel = int(rng.integers(100, 121)) if downbeat else int(rng.integers(65, 86))
            pitch = root if downbeat else root + int(rng.choice([7, 12, 16, 19]))
            notes.append(Note(pitch, t, t + period * 0.45, vel))
            if downbeat and rng.random() < 0.5:
                notes.append(Note(root + 12 + int(rng.choice([3, 4, 7])), t, t + period * 0.9, vel - 10))
        if rng.random() < 0.35:
            frac = float(rng.choice([0.5, 0.5, 0.25, 0.75]))
            tt = t + frac * period
            pitch = root + 12 + int(rng.integers(0, 13))
            notes.append(Note(pitch, tt, tt + period * 0.2, int(rng.integers(35, 61))))
    midi = write_midi(notes, bpm=bpm, time_signature=(meter, 4), end_time=n_beats * period)
    return SynthPiece(parse_midi_file(midi, piece_id), midi, bpm, meter)


def synth_corpus(seed: int, n_pieces: int, prefix: str = "synth", **kwargs) -> list[SynthPiece]:
    rng = np.random.default_rng(seed)
    width = max(3, len(str(n_pieces - 1)))
    return [synth_piece(rng, f"{prefix}{i:0{width}d}", **kwargs) for i in range(n_pieces)]


def write_corpus(out_dir: Path, pieces: list[SynthPiece]) -> list[Path]:
    """Write ``<id>.mid`` and ``<id>.tsv`` per piece; returns the MIDI paths."""
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for sp in pieces:
        path = out_dir / f"{sp.piece.id}.mid"
        path.write_bytes(sp.midi)
        (out_dir / f"{sp.piece.id}.tsv").write_text(dump_beat_tsv(sp.piece.beats), encoding="utf-8")
        paths.append(path)
    return paths
