import math
import random
from collections import Counter

import numpy as np
import pytest

from beatgrid.augment import (
    IDENTITY,
    MAX_REDRAWS,
    AugmentConfig,
    AugmentParams,
    apply_augmentation,
    augment_segment,
    sample_augmentation_params,
    segment_rng,
)
from beatgrid.errors import ConfigError, EmptySegment, InfeasibleTranspose
from beatgrid.midi import BeatEvent, Note
from beatgrid.pipeline import Segment

ALL = AugmentConfig(enable_transpose=True, enable_shift=True, enable_scale=True)


def seg(notes=((55, 0.5, 1.0), (62, 1.0, 2.0)), beats=((0.5, 1), (2.0, 2))):
    return Segment("p", 0, 0.0, [Note(p, a, b, 80) for p, a, b in notes], [BeatEvent(t, c) for t, c in beats])


def test_disabled_flags_give_identity():
    rng = np.random.default_rng(0)
    assert sample_augmentation_params(seg(), AugmentConfig(), rng) == AugmentParams(0, 0.0, 1.0)


def test_full_pitch_range_forces_zero_transpose():
    s = seg(notes=((21, 0, 1), (108, 1, 2)))
    rng = np.random.default_rng(0)
    for _ in range(50):
        assert sample_augmentation_params(s, AugmentConfig(enable_transpose=True), rng).transpose == 0


def test_empty_segment_rejected():
    with pytest.raises(EmptySegment):
        sample_augmentation_params(seg(notes=()), ALL, np.random.default_rng(0))


def _chi2_critical(df, z=3.090):  # upper 0.1% point, Wilson-Hilferty
    return df * (1 - 2 / (9 * df) + z * math.sqrt(2 / (9 * df))) ** 3


def test_transpose_histogram_is_uniform():
    s = seg(notes=((40, 0, 1), (80, 1, 2)))
    cfg = AugmentConfig(enable_transpose=True)
    rng = np.random.default_rng(2024)
    n = 100_000
    counts = Counter(sample_augmentation_params(s, cfg, rng).transpose for _ in range(n))
    support = range(21 - 40, 108 - 80 + 1)
    assert set(counts) == set(support)
    expected = n / len(support)
    chi2 = sum((counts[k] - expected) ** 2 / expected for k in support)
    assert chi2 < _chi2_critical(len(support) - 1)


def test_shift_and_scale_ranges():
    rng = np.random.default_rng(5)
    draws = [sample_augmentation_params(seg(), ALL, rng) for _ in range(2000)]
    assert all(-1.0 <= d.shift <= 1.0 and 0.9 <= d.scale <= 1.1 for d in draws)
    assert min(d.shift for d in draws) < -0.9 and max(d.shift for d in draws) > 0.9


def test_pitch_bounds_hold_after_augmentation():
    rng = np.random.default_rng(9)
    s = seg(notes=((30, 0.5, 1.0), (90, 1.0, 2.0), (60, 3.0, 4.0)))
    for _ in range(500):
        out = apply_augmentation(s, sample_augmentation_params(s, ALL, rng))
        assert all(21 <= n.pitch <= 108 for n in out.notes)


def test_transpose_example():
    out = apply_augmentation(seg(notes=((55, 0.5, 1.0),)), AugmentParams(2, 0.0, 1.0))
    assert out.notes == [Note(57, 0.5, 1.0, 80)]
    assert out.beats == seg().beats


def test_scale_example():
    out = apply_augmentation(seg(beats=((2.0, 1),)), AugmentParams(0, 0.0, 1.1))
    assert out.beats == [BeatEvent(1.1 * 2.0, 1)]
    assert out.beats[0].time == pytest.approx(2.2)


def test_shift_drops_beat_before_zero():
    out = apply_augmentation(seg(beats=((0.5, 1), (2.0, 2))), AugmentParams(0, -1.0, 1.0))
    assert out.beats == [BeatEvent(1.0, 2)]


def test_notes_survive_by_onset_and_offsets_clip():
    s = seg(notes=((60, 0.2, 0.8), (61, 9.5, 9.9)))
    out = apply_augmentation(s, AugmentParams(0, 0.3, 1.0))
    assert out.notes == [Note(60, 0.5, 1.1, 80), Note(61, 9.8, 10.0, 80)]
    out = apply_augmentation(s, AugmentParams(0, -0.5, 1.0))
    assert [n.pitch for n in out.notes] == [61]


def test_infeasible_transpose():
    with pytest.raises(InfeasibleTranspose):
        apply_augmentation(seg(notes=((120, 0, 1),)), AugmentParams(10, 0.0, 1.0))


def test_identity_fixed_point():
    s = seg()
    assert apply_augmentation(s, IDENTITY) == s
    assert IDENTITY.is_identity


def test_determinism_per_segment_stream():
    a = sample_augmentation_params(seg(), ALL, segment_rng(7, "piece", 3, 1))
    b = sample_augmentation_params(seg(), ALL, segment_rng(7, "piece", 3, 1))
    c = sample_augmentation_params(seg(), ALL, segment_rng(7, "piece", 3, 2))
    assert a == b and a != c


def test_redraw_then_skip():
    # a lone beat near the end can always be pushed out by a large shift
    s = seg(notes=((60, 9.9, 10.0),), beats=((9.95, 1),))
    cfg = AugmentConfig(enable_shift=True, shift_range=50.0)
    assert augment_segment(s, cfg, np.random.default_rng(0)) is None
    assert augment_segment(s, AugmentConfig(), np.random.default_rng(0)) is s
    assert MAX_REDRAWS == 8


def test_config_validation():
    with pytest.raises(ConfigError):
        AugmentConfig(pitch_low=100, pitch_high=50)
    with pytest.raises(ConfigError):
        AugmentConfig(scale_low=1.2, scale_high=1.1)
    with pytest.raises(ConfigError):
        AugmentConfig(shift_range=-1)


def test_scaled_intervals_general_floats_within_rounding():
    # on arbitrary floats each mapped time carries one rounding of scale*t+shift,
    # so intervals agree with s*(b-a) to a few ulps of the absolute times
    rng = random.Random(11)
    for _ in range(1000):
        times = sorted(rng.sample(range(1, 9000), 6))
        beats = tuple((t / 1000 + rng.random() * 1e-4, 1) for t in times)
        s_, d = rng.uniform(0.9, 1.1), rng.uniform(-1, 1)
        src = seg(beats=beats)
        out = apply_augmentation(src, AugmentParams(0, d, s_))
        kept = [b.time for b in src.beats if 0 <= s_ * b.time + d < 10]
        got = [b.time for b in out.beats]
        for (a0, a1), (b0, b1) in zip(zip(kept, kept[1:]), zip(got, got[1:])):
            assert abs((b1 - b0) - s_ * (a1 - a0)) <= 8 * math.ulp(10.0)
