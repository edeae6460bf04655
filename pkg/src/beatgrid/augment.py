"""Training-time pitch transposition, time shift and time scaling of segments."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from beatgrid.errors import ConfigError, EmptySegment, InfeasibleTranspose
from beatgrid.midi import BeatEvent, Note
from beatgrid.pipeline import Segment

MAX_REDRAWS = 8


@dataclass(frozen=True, slots=True)
class AugmentConfig:
    enable_transpose: bool = False
    pitch_low: int = 21  # A0
    pitch_high: int = 108  # C8
    enable_shift: bool = False
    shift_range: float = 1.0
    enable_scale: bool = False
    scale_low: float = 0.9
    scale_high: float = 1.1
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.pitch_low > self.pitch_high:
            raise ConfigError("augment: pitch_low > pitch_high")
        if self.scale_low > self.scale_high or self.scale_low <= 0:
            raise ConfigError("augment: need 0 < scale_low <= scale_high")
        if self.shift_range < 0:
            raise ConfigError("augment: shift_range must be >= 0")

    @property
    def enabled(self) -> bool:
        return self.enable_transpose or self.enable_shift or self.enable_scale


@dataclass(frozen=True, slots=True)
class AugmentParams:
    transpose: int = 0
    shift: float = 0.0
    scale: float = 1.0

    @property
    def is_identity(self) -> bool:
        return self.transpose == 0 and self.shift == 0.0 and self.scale == 1.0


IDENTITY = AugmentParams()


def segment_rng(seed: int, piece_id: str, index: int, epoch: int) -> np.random.Generator:
    """Independent stream per (seed, piece, segment, epoch) so loading order does not matter."""
    key = [seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(piece_id.encode()), index, epoch]
    return np.random.default_rng(np.random.SeedSequence(key))


def sample_augmentation_params(
    segment: Segment, cfg: AugmentConfig, rng: np.random.Generator
) -> AugmentParams:
    if not segment.notes:
        raise EmptySegment(f"{segment.piece_id}#{segment.index} has no notes")
    transpose, shift, scale = 0, 0.0, 1.0
    if cfg.enable_transpose:
        lo = cfg.pitch_low - min(n.pitch for n in segment.notes)
        hi = cfg.pitch_high - max(n.pitch for n in segment.notes)
        if lo <= hi:
            transpose = int(rng.integers(lo, hi, endpoint=True))
    if cfg.enable_shift:
        shift = float(rng.uniform(-cfg.shift_range, cfg.shift_range))
    if cfg.enable_scale:
        scale = float(rng.uniform(cfg.scale_low, cfg.scale_high))
    return AugmentParams(transpose, shift, scale)


def apply_augmentation(
    segment: Segment, params: AugmentParams, segment_length: float = 10.0
) -> Segment:
    """Transpose pitches and map every time through ``scale * t + shift``.

    Notes survive iff their mapped onset stays in ``[0, segment_length)``;
    surviving offsets are clipped to the window end. Beats outside the window
    are dropped.
    """
    if params.transpose:
        pitches = [n.pitch + params.transpose for n in segment.notes]
        if pitches and (min(pitches) < 0 or max(pitches) > 127):
            raise InfeasibleTranspose(f"transpose {params.transpose:+d} leaves the MIDI range")
    s, d, L = params.scale, params.shift, segment_length
    notes = []
    for n in segment.notes:
        onset = s * n.onset + d
        if 0.0 <= onset < L:
            notes.append(Note(n.pitch + params.transpose, onset, min(s * n.offset + d, L), n.velocity))
    beats = []
    for b in segment.beats:
        t = s * b.time + d
        if 0.0 <= t < L:
            beats.append(BeatEvent(t, b.counter))
    notes.sort(key=Note.sort_key)
    beats.sort(key=lambda b: b.time)
    return Segment(segment.piece_id, segment.index, segment.start, notes, beats)


def augment_segment(
    segment: Segment,
    cfg: AugmentConfig,
    rng: np.random.Generator,
    segment_length: float = 10.0,
) -> Segment | None:
    """Draw and apply params; redraw when nothing survives, give up after a few tries."""
    if not cfg.enabled:
        return segment
    for _ in range(MAX_REDRAWS):
        out = apply_augmentation(segment, sample_augmentation_params(segment, cfg, rng), segment_length)
        if out.notes and out.beats:
            return out
    return None
