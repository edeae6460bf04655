import numpy as np
import pytest

from beatgrid.midi import parse_midi_file
from beatgrid.synth import synth_corpus, synth_piece, write_corpus


def test_corpus_is_seeded():
    a = synth_corpus(7, 5)
    b = synth_corpus(7, 5)
    assert [p.midi for p in a] == [p.midi for p in b]
    assert [p.midi for p in synth_corpus(8, 5)] != [p.midi for p in a]


@pytest.mark.parametrize("seed", range(10))
def test_piece_structure(seed):
    sp = synth_piece(np.random.default_rng(seed), "x")
    assert 60 <= sp.bpm <= 180 and sp.meter in (3, 4)
    beats = sp.piece.beats
    period = 60 / sp.bpm
    assert [b.counter for b in beats] == [k % sp.meter + 1 for k in range(len(beats))]
    assert all(abs(b.time - k * period) < 1e-3 for k, b in enumerate(beats))
    assert 10.0 - period <= sp.piece.duration <= 20.0 + period
    # downbeats carry the loudest notes
    down = {round(b.time, 3) for b in beats if b.is_downbeat}
    accents = [n.velocity for n in sp.piece.notes if round(n.onset, 3) in down]
    others = [n.velocity for n in sp.piece.notes if round(n.onset, 3) not in down]
    assert min(accents) > max(others)


def test_write_corpus_round_trips(tmp_path):
    pieces = synth_corpus(1, 3)
    paths = write_corpus(tmp_path, pieces)
    assert [p.name for p in paths] == ["synth000.mid", "synth001.mid", "synth002.mid"]
    for sp, path in zip(pieces, paths):
        assert parse_midi_file(path.read_bytes(), sp.piece.id).notes == sp.piece.notes
        assert path.with_suffix(".tsv").exists()
