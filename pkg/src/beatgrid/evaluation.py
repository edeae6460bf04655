"""Beat / downbeat F-measure with a symmetric tolerance window."""

from __future__ import annotations

import csv
import io
import json
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass

from beatgrid.errors import ConfigError, EmptyCorpus, UnsortedInput
from beatgrid.midi import BeatEvent

# Times are usually stored at millisecond precision; without this slack a
# deviation of exactly one tolerance (e.g. 1.07 - 1.0) misses by rounding.
_SLACK = 1e-9


@dataclass(frozen=True, slots=True)
class EvalConfig:
    tolerance: float = 0.070
    skip_intro: float = 0.0

    def __post_init__(self) -> None:
        if self.tolerance <= 0:
            raise ConfigError("eval: tolerance must be > 0")
        if self.skip_intro < 0:
            raise ConfigError("eval: skip_intro must be >= 0")


@dataclass(frozen=True, slots=True)
class EvalResult:
    f_b: float
    p_b: float
    r_b: float
    f_db: float
    p_db: float
    r_db: float
    matched_b: int = 0
    n_ref_b: int = 0
    n_est_b: int = 0
    matched_db: int = 0
    n_ref_db: int = 0
    n_est_db: int = 0


def _check_sorted(times: Sequence[float], name: str) -> None:
    if any(b < a for a, b in zip(times, times[1:])):
        raise UnsortedInput(f"{name} times are not sorted")


def match_events(
    reference: Sequence[float], estimate: Sequence[float], tolerance: float
) -> list[tuple[int, int]]:
    """Maximum one-to-one matching with ``|ref - est| <= tolerance``.

    Both inputs must be sorted. Scanning both lists and pairing the earliest
    compatible events is optimal because every event's compatible set is an
    interval of the other, sorted list. Returns ``(ref_index, est_index)``
    pairs.
    """
    _check_sorted(reference, "reference")
    _check_sorted(estimate, "estimate")
    pairs = []
    i = j = 0
    while i < len(reference) and j < len(estimate):
        d = estimate[j] - reference[i]
        if abs(d) <= tolerance + _SLACK:
            pairs.append((i, j))
            i += 1
            j += 1
        elif d < 0:
            j += 1
        else:
            i += 1
    return pairs


def _prf(matched: int, n_ref: int, n_est: int) -> tuple[float, float, float]:
    if n_ref == 0 and n_est == 0:
        return 1.0, 1.0, 1.0
    if n_ref == 0 or n_est == 0:
        return 0.0, 0.0, 0.0
    p = matched / n_est
    r = matched / n_ref
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return f, p, r


def f_measure(
    reference: Sequence[BeatEvent], estimate: Sequence[BeatEvent], cfg: EvalConfig = EvalConfig()
) -> EvalResult:
    """Beat F1 over all events, downbeat F1 over counter-1 events only."""
    ref = [b for b in reference if b.time >= cfg.skip_intro]
    est = [b for b in estimate if b.time >= cfg.skip_intro]
    ref_t = [b.time for b in ref]
    est_t = [b.time for b in est]
    ref_db = [b.time for b in ref if b.is_downbeat]
    est_db = [b.time for b in est if b.is_downbeat]
    m_b = len(match_events(ref_t, est_t, cfg.tolerance))
    m_db = len(match_events(ref_db, est_db, cfg.tolerance))
    f_b, p_b, r_b = _prf(m_b, len(ref_t), len(est_t))
    f_db, p_db, r_db = _prf(m_db, len(ref_db), len(est_db))
    return EvalResult(
        f_b, p_b, r_b, f_db, p_db, r_db,
        m_b, len(ref_t), len(est_t), m_db, len(ref_db), len(est_db),
    )


@dataclass
class CorpusResult:
    summary: EvalResult
    rows: list[tuple[str, EvalResult]]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["piece_id", "f_b", "p_b", "r_b", "f_db", "p_db", "r_db"])
        for pid, r in self.rows:
            w.writerow([pid] + [f"{v:.6f}" for v in (r.f_b, r.p_b, r.r_b, r.f_db, r.p_db, r.r_db)])
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"pieces": len(self.rows), **asdict(self.summary)}, indent=2, sort_keys=True) + "\n"


_SCORES = ("f_b", "p_b", "r_b", "f_db", "p_db", "r_db")
_COUNTS = ("matched_b", "n_ref_b", "n_est_b", "matched_db", "n_ref_db", "n_est_db")


def evaluate_corpus(
    pairs: Sequence[tuple[str, Sequence[BeatEvent], Sequence[BeatEvent]]],
    cfg: EvalConfig = EvalConfig(),
    weighted: bool = False,
) -> CorpusResult:
    """Score each ``(piece_id, reference, estimate)`` and average.

    The corpus score is the unweighted per-piece mean, or weighted by the
    number of reference beats when ``weighted`` is set.
    """
    if not pairs:
        raise EmptyCorpus("no pieces to evaluate")
    rows = [(pid, f_measure(ref, est, cfg)) for pid, ref, est in pairs]
    weights = [float(r.n_ref_b) if weighted else 1.0 for _, r in rows]
    total = math.fsum(weights) or 1.0
    means = {
        k: math.fsum(w * getattr(r, k) for w, (_, r) in zip(weights, rows)) / total for k in _SCORES
    }
    counts = {k: sum(getattr(r, k) for _, r in rows) for k in _COUNTS}
    return CorpusResult(EvalResult(**means, **counts), rows)
