import random

import pytest
from hypothesis import given, strategies as st

from beatgrid.codec import (
    ALLOWED_STEPS,
    BOS,
    EOS,
    PAD,
    UNK,
    CodecConfig,
    Scheme,
    Vocabulary,
    build_vocabulary,
    decode_beat_tokens,
    dequantize,
    encode_example,
    encode_input,
    encode_target,
    quantize_time,
)
from beatgrid.errors import ConfigError, CounterOverflow, OutOfWindow
from beatgrid.midi import BeatEvent, Note
from beatgrid.pipeline import Segment
from oracles import random_codec_segment

SCHEMES = list(Scheme)

# two notes and three beats in the style of the reference encoding table
TABLE_NOTES = [Note(55, 0.01, 0.44, 80), Note(62, 0.44, 0.89, 72)]
TABLE_BEATS = [BeatEvent(0.01, 1), BeatEvent(0.44, 2), BeatEvent(0.89, 3)]

GOLDEN_INPUT = {
    "v1": "ON⟨55⟩ T⟨0.01⟩ ON⟨62⟩ T⟨0.44⟩",
    "v2": "ON⟨55⟩ T⟨0.01⟩ OFF⟨55⟩ T⟨0.44⟩ ON⟨62⟩ T⟨0.44⟩ OFF⟨62⟩ T⟨0.89⟩",
    "v3": "ON⟨55⟩ T⟨0.01⟩ VEL⟨80⟩ OFF⟨55⟩ T⟨0.44⟩ ON⟨62⟩ T⟨0.44⟩ VEL⟨72⟩ OFF⟨62⟩ T⟨0.89⟩",
    "v4": "ON⟨55⟩ T⟨0.01⟩ VEL⟨80⟩ OFF⟨55⟩ T⟨0.44⟩ ON⟨62⟩ T⟨0.44⟩ VEL⟨72⟩ OFF⟨62⟩ T⟨0.89⟩",
    "v5": "ON⟨55⟩ T⟨0.01⟩ OFF⟨55⟩ T⟨0.44⟩ ON⟨62⟩ T⟨0.44⟩ OFF⟨62⟩ T⟨0.89⟩",
}
GOLDEN_TARGET = {
    "v1": "BOS B⟨1⟩ T⟨0.01⟩ B⟨2⟩ T⟨0.44⟩ B⟨3⟩ T⟨0.89⟩ EOS",
    "v2": "BOS B⟨1⟩ T⟨0.01⟩ B⟨2⟩ T⟨0.44⟩ B⟨3⟩ T⟨0.89⟩ EOS",
    "v3": "BOS B⟨1⟩ T⟨0.01⟩ B⟨2⟩ T⟨0.44⟩ B⟨3⟩ T⟨0.89⟩ EOS",
    "v4": "BOS DB T⟨0.01⟩ B T⟨0.44⟩ B T⟨0.89⟩ EOS",
    "v5": "BOS DB T⟨0.01⟩ B T⟨0.44⟩ B T⟨0.89⟩ EOS",
}


@pytest.mark.parametrize("scheme", SCHEMES)
def test_reference_table_goldens(scheme):
    vocab = Vocabulary(CodecConfig(scheme))
    x, y = encode_example(Segment("t", 0, 0.0, TABLE_NOTES, TABLE_BEATS), vocab)
    assert vocab.render(x) == GOLDEN_INPUT[scheme.value]
    assert vocab.render(y) == GOLDEN_TARGET[scheme.value]
    assert vocab.parse(GOLDEN_INPUT[scheme.value]) == x


@pytest.mark.parametrize(
    "t,index", [(0.014, 1), (0.015, 2), (0.025, 3), (0.44, 44), (0.0, 0), (0.004999, 0), (0.005, 1)]
)
def test_quantize_examples(t, index):
    assert quantize_time(t, CodecConfig(step=0.010)) == index


def test_quantize_clamps_last_half_step_and_end():
    cfg = CodecConfig(step=0.010)
    assert quantize_time(9.996, cfg) == 999
    assert quantize_time(10.0, cfg) == 999
    with pytest.raises(OutOfWindow):
        quantize_time(10.001, cfg)
    with pytest.raises(OutOfWindow):
        quantize_time(-0.001, cfg)


def test_dequantize_inverse():
    cfg = CodecConfig(step=0.05)
    assert [dequantize(i, cfg) for i in (0, 1, 7, 199)] == [0.0, 0.05, 0.35, 9.95]


def _inventory_size(scheme, n_time, max_counter=12):
    # counted per token family, independently of the Vocabulary class
    size = 4 + n_time + 128  # specials, T, ON
    if scheme != "v1":
        size += 128  # OFF
    if scheme in ("v3", "v4"):
        size += 127  # VEL 1..127
    size += max_counter if scheme in ("v1", "v2", "v3") else 2
    return size


@pytest.mark.parametrize("scheme", SCHEMES)
@pytest.mark.parametrize("step", ALLOWED_STEPS)
@pytest.mark.parametrize("length", [5.0, 10.0, 15.0])
def test_vocabulary_arithmetic(scheme, step, length):
    cfg = CodecConfig(scheme, step, length)
    vocab = build_vocabulary(cfg)
    n_time = sum(vocab.is_time(i) for i in range(len(vocab)))
    assert n_time == cfg.n_time_tokens == round(length / step)
    assert len(vocab) == _inventory_size(scheme.value, n_time)
    assert len(set(vocab.tokens)) == len(vocab)


def test_vocabulary_sizes_at_reference_config():
    assert len(Vocabulary(CodecConfig(Scheme.V1))) == 1144
    assert len(Vocabulary(CodecConfig(Scheme.V4))) == 1389
    # the v2 target still needs B<1..12>: 4 + 1000 + 128 + 128 + 12
    assert len(Vocabulary(CodecConfig(Scheme.V2))) == 1272
    assert CodecConfig().n_time_tokens == 1000


def test_vocabulary_ids_depend_only_on_config():
    a, b = Vocabulary(CodecConfig(Scheme.V3, 0.02)), Vocabulary(CodecConfig("v3", 0.020))
    assert a == b and a.tokens[:4] == ["PAD", "BOS", "EOS", "UNK"]
    assert (PAD, BOS, EOS, UNK) == (0, 1, 2, 3)
    assert a.tokens[a.time_id(0)] == "T⟨0.00⟩" and a.tokens[a.vel_id(1)] == "VEL⟨1⟩"
    assert Vocabulary(CodecConfig(step=0.005)).tokens[4 + 3] == "T⟨0.015⟩"


@pytest.mark.parametrize("kwargs", [{"step": 0.03}, {"segment_length": 10.003}, {"max_counter": 0}, {"scheme": "v9"}])
def test_codec_config_validation(kwargs):
    with pytest.raises((ConfigError, ValueError)):
        CodecConfig(**kwargs)


def test_counter_overflow():
    vocab = Vocabulary(CodecConfig())
    with pytest.raises(CounterOverflow):
        encode_target([BeatEvent(0.5, 13)], vocab)
    with pytest.raises(CounterOverflow):
        encode_target([BeatEvent(0.5, 0)], vocab)


def test_out_of_window_note():
    with pytest.raises(OutOfWindow):
        encode_input([Note(60, 10.5, 11)], Vocabulary(CodecConfig()))


def test_tie_order_off_before_on_then_pitch():
    vocab = Vocabulary(CodecConfig(Scheme.V2))
    notes = [Note(64, 0.5, 1.0), Note(60, 0.5, 1.0), Note(67, 0.0, 0.5)]
    assert vocab.render(encode_input(notes, vocab)) == (
        "ON⟨67⟩ T⟨0.00⟩ OFF⟨67⟩ T⟨0.50⟩ ON⟨60⟩ T⟨0.50⟩ ON⟨64⟩ T⟨0.50⟩ OFF⟨60⟩ T⟨1.00⟩ OFF⟨64⟩ T⟨1.00⟩"
    )


def test_offset_at_window_end_uses_last_time_token():
    vocab = Vocabulary(CodecConfig(Scheme.V2))
    assert vocab.render(encode_input([Note(60, 9.0, 10.0)], vocab)) == "ON⟨60⟩ T⟨9.00⟩ OFF⟨60⟩ T⟨9.99⟩"


# lenient decoding


def test_decode_flag_scheme():
    vocab = Vocabulary(CodecConfig(Scheme.V4))
    beats, discards = decode_beat_tokens(vocab.parse("BOS DB T⟨0.01⟩ B T⟨0.44⟩ EOS"), vocab)
    assert beats == [BeatEvent(0.01, 1), BeatEvent(0.44, 0)]
    assert [b.is_downbeat for b in beats] == [True, False]
    assert discards == 0


def test_decode_empty():
    vocab = Vocabulary(CodecConfig())
    assert decode_beat_tokens(vocab.parse("BOS EOS"), vocab) == ([], 0)


def test_decode_skips_beat_without_time():
    vocab = Vocabulary(CodecConfig())
    beats, discards = decode_beat_tokens(vocab.parse("BOS B⟨2⟩ B⟨3⟩ T⟨0.50⟩ EOS"), vocab)
    assert beats == [BeatEvent(0.5, 3)] and discards == 1


def test_decode_duplicates_and_garbage():
    vocab = Vocabulary(CodecConfig())
    text = "BOS B⟨1⟩ T⟨0.50⟩ B⟨2⟩ T⟨0.50⟩ ON⟨60⟩ T⟨0.70⟩ B⟨3⟩ T⟨0.20⟩ B⟨4⟩ EOS B⟨1⟩ T⟨0.90⟩"
    beats, discards = decode_beat_tokens(vocab.parse(text), vocab)
    assert beats == [BeatEvent(0.2, 3), BeatEvent(0.5, 1)]
    # duplicate time, stray ON, stray T, dangling B<4>
    assert discards == 4


@given(st.lists(st.integers(0, 1400), max_size=60))
def test_decode_never_raises_and_is_sorted(ids):
    vocab = Vocabulary(CodecConfig(Scheme.V1))
    beats, discards = decode_beat_tokens(ids, vocab)
    assert discards >= 0
    assert all(a.time < b.time for a, b in zip(beats, beats[1:]))


# properties over seeded random segments


def check_round_trip(seg, vocab):
    cfg = vocab.cfg
    _, target = encode_example(seg, vocab)
    beats, discards = decode_beat_tokens(target, vocab)
    assert discards == 0 and len(beats) == len(seg.beats)
    for got, want in zip(beats, seg.beats):
        assert abs(got.time - want.time) <= cfg.step / 2 + 1e-9
        if cfg.scheme.has_counters:
            assert got.counter == want.counter
        else:
            assert got.is_downbeat == want.is_downbeat


@pytest.mark.parametrize("scheme", SCHEMES)
def test_round_trip_seeded(scheme):
    rng = random.Random(hash(scheme.value) & 0xFFFF)
    for step in ALLOWED_STEPS:
        vocab = Vocabulary(CodecConfig(scheme, step))
        for _ in range(50):
            check_round_trip(random_codec_segment(rng, vocab.cfg), vocab)


def test_beats_in_last_half_step_clamp_to_last_token():
    cfg = CodecConfig(Scheme.V3, 0.2)
    vocab = Vocabulary(cfg)
    beats, _ = decode_beat_tokens(encode_target([BeatEvent(9.95, 2)], vocab), vocab)
    assert beats == [BeatEvent(9.8, 2)]


@pytest.mark.parametrize("scheme", SCHEMES)
def test_time_tokens_monotone(scheme):
    rng = random.Random(5)
    vocab = Vocabulary(CodecConfig(scheme, 0.02))
    for _ in range(100):
        x, y = encode_example(random_codec_segment(rng, vocab.cfg), vocab)
        for ids in (x, y):
            times = [i for i in ids if vocab.is_time(i)]
            assert times == sorted(times)


def _quantized(seg, cfg):
    q = lambda t: quantize_time(min(t, cfg.segment_length), cfg)
    notes = sorted(
        (q(n.onset), n.pitch)
        + ((q(n.offset),) if cfg.scheme.has_offsets else ())
        + ((n.velocity,) if cfg.scheme.has_velocity else ())
        for n in seg.notes
    )
    flag = (lambda c: c) if cfg.scheme.has_counters else (lambda c: c == 1)
    return notes, [(q(b.time), flag(b.counter)) for b in seg.beats]


@pytest.mark.parametrize("scheme", SCHEMES)
def test_encoding_injective_on_quantized_segments(scheme):
    rng = random.Random(17)
    vocab = Vocabulary(CodecConfig(scheme, 0.1))
    seen = {}
    for _ in range(3000):
        seg = random_codec_segment(rng, vocab.cfg, n_notes=2, n_beats=2)
        key = _quantized(seg, vocab.cfg)
        enc = tuple(map(tuple, encode_example(seg, vocab)))
        if enc in seen:
            assert seen[enc] == key
        seen[enc] = key
