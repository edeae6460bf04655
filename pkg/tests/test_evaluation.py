import json
import random

import pytest
from hypothesis import given, strategies as st

from beatgrid.errors import ConfigError, EmptyCorpus, UnsortedInput
from beatgrid.evaluation import EvalConfig, evaluate_corpus, f_measure, match_events
from beatgrid.midi import BeatEvent
from oracles import brute_force_matching, random_match_instance


def test_greedy_equals_brute_force_on_500_instances():
    rng = random.Random(0)
    for _ in range(500):
        ref, est = random_match_instance(rng)
        pairs = match_events(ref, est, 0.07)
        assert len(pairs) == brute_force_matching(ref, est, 0.07)
        assert len({i for i, _ in pairs}) == len({j for _, j in pairs}) == len(pairs)
        assert all(abs(est[j] - ref[i]) <= 0.07 + 1e-9 for i, j in pairs)


def test_match_example():
    ref, est = [0.5, 1.0, 1.5], [0.52, 1.08, 1.50]
    assert match_events(ref, est, 0.07) == [(0, 0), (2, 2)]
    assert match_events(ref, [], 0.07) == []


def test_match_boundary_at_millisecond_precision():
    assert match_events([1.0], [1.07], 0.07) == [(0, 0)]
    assert match_events([1.0], [1.071], 0.07) == []


def test_unsorted_rejected():
    with pytest.raises(UnsortedInput):
        match_events([1.0, 0.5], [0.5], 0.07)
    with pytest.raises(UnsortedInput):
        match_events([0.5], [1.0, 0.5], 0.07)


def beats(times, downbeats=()):
    return [BeatEvent(t, 1 if i in downbeats else 2) for i, t in enumerate(times)]


def test_f_measure_identity():
    ref = beats([0.5, 1.0, 1.5, 2.0], downbeats={0})
    r = f_measure(ref, ref)
    assert (r.f_b, r.f_db, r.p_b, r.r_b) == (1.0, 1.0, 1.0, 1.0)


def test_f_measure_counts():
    r = f_measure(beats([0.5, 1.0, 1.5]), beats([0.52, 1.08, 1.50]))
    assert r.p_b == pytest.approx(2 / 3) and r.r_b == pytest.approx(2 / 3) and r.f_b == pytest.approx(2 / 3)
    assert (r.matched_b, r.n_ref_b, r.n_est_b) == (2, 3, 3)


def test_wrong_downbeat_only_hurts_f_db():
    r = f_measure(beats([0.5, 1.0, 1.5, 2.0], {0}), beats([0.5, 1.0, 1.5, 2.0], {2}))
    assert r.f_b == 1.0 and r.f_db == 0.0


def test_empty_conventions():
    assert f_measure([], []).f_b == 1.0
    assert f_measure([], []).f_db == 1.0
    assert f_measure(beats([1.0]), []).f_b == 0.0
    assert f_measure([], beats([1.0])).f_b == 0.0
    # no downbeats on either side is a perfect downbeat score
    assert f_measure(beats([1.0]), beats([1.0])).f_db == 1.0


def test_flag_estimates_use_downbeat_flag():
    ref = [BeatEvent(0.5, 1), BeatEvent(1.0, 2)]
    est = [BeatEvent(0.5, 1), BeatEvent(1.0, 0)]
    assert f_measure(ref, est).f_db == 1.0


def test_skip_intro():
    ref = beats([1.0, 6.0])
    est = beats([6.0])
    assert f_measure(ref, est, EvalConfig(skip_intro=5.0)).f_b == 1.0
    assert f_measure(ref, est).f_b == pytest.approx(2 / 3)


def test_eval_config_validation():
    with pytest.raises(ConfigError):
        EvalConfig(tolerance=0)


def test_shift_invariance_1000_cases():
    rng = random.Random(1)
    for _ in range(1000):
        ref, est = random_match_instance(rng)
        ref, est = sorted(set(ref)), sorted(set(est))
        c = rng.choice([0.5, 1.0, 3.25, 10.0, 100.0])
        a = f_measure(beats(ref, {0}), beats(est, {0}))
        b = f_measure(beats([t + c for t in ref], {0}), beats([t + c for t in est], {0}))
        assert a == b


def test_tolerance_monotonicity_1000_cases():
    rng = random.Random(2)
    for _ in range(1000):
        ref, est = random_match_instance(rng)
        tols = sorted(rng.uniform(0.001, 0.3) for _ in range(4))
        counts = [len(match_events(ref, est, t)) for t in tols]
        assert counts == sorted(counts)


@given(
    st.lists(st.floats(0, 5).map(lambda x: round(x, 3)), max_size=12).map(sorted),
    st.lists(st.floats(0, 5).map(lambda x: round(x, 3)), max_size=12).map(sorted),
    st.floats(0.001, 0.5),
)
def test_symmetric_roles(ref, est, tol):
    assert len(match_events(ref, est, tol)) == len(match_events(est, ref, tol))


def test_corpus_mean_and_rows():
    ref = beats([0.5, 1.0])
    res = evaluate_corpus([("a", ref, ref), ("b", ref, [])])
    assert res.summary.f_b == 0.5
    assert [pid for pid, _ in res.rows] == ["a", "b"]
    single = evaluate_corpus([("a", ref, beats([0.5]))])
    assert single.summary.f_b == single.rows[0][1].f_b


def test_corpus_weighted():
    res = evaluate_corpus([("a", beats([0.5, 1.0, 1.5]), beats([0.5, 1.0, 1.5])), ("b", beats([0.5]), [])], weighted=True)
    assert res.summary.f_b == 0.75


def test_corpus_permutation_invariant():
    rng = random.Random(3)
    pairs = []
    for k in range(30):
        ref, est = random_match_instance(rng)
        pairs.append((f"p{k}", beats(sorted(set(ref)), {0}), beats(sorted(set(est)), {0})))
    a = evaluate_corpus(pairs).summary
    for _ in range(5):
        rng.shuffle(pairs)
        assert evaluate_corpus(pairs).summary == a


def test_corpus_empty():
    with pytest.raises(EmptyCorpus):
        evaluate_corpus([])


def test_report_formats():
    ref = beats([0.5, 1.0], {0})
    res = evaluate_corpus([("a", ref, ref)])
    assert res.to_csv().splitlines() == [
        "piece_id,f_b,p_b,r_b,f_db,p_db,r_db",
        "a,1.000000,1.000000,1.000000,1.000000,1.000000,1.000000",
    ]
    summary = json.loads(res.to_json())
    assert summary["pieces"] == 1 and summary["f_b"] == 1.0
