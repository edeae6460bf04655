"""Beam-search generation and stitching of window predictions into beat tracks."""

from __future__ import annotations

import math
from collections import Counter
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass

import numpy as np
import torch

from beatgrid.codec import BOS, EOS, PAD, Vocabulary, decode_beat_tokens, encode_input
from beatgrid.errors import ConfigError
from beatgrid.midi import BeatEvent, Piece
from beatgrid.model.transformer import Seq2SeqTransformer
from beatgrid.pipeline import cut_window, window_starts

StepFn = Callable[[list[list[int]]], np.ndarray]


@dataclass(frozen=True, slots=True)
class DecodeConfig:
    beam_size: int = 5
    no_repeat_ngram: int = 2
    max_target_len: int = 256
    length_penalty: float = 1.0

    def __post_init__(self) -> None:
        if self.beam_size < 1:
            raise ConfigError("decode: beam_size must be >= 1")
        if self.no_repeat_ngram < 0:
            raise ConfigError("decode: no_repeat_ngram must be >= 0")
        if self.max_target_len < 2:
            raise ConfigError("decode: max_target_len must be >= 2")


@dataclass(frozen=True, slots=True)
class StitchConfig:
    hop: float = 5.0
    tolerance: float = 0.035

    def __post_init__(self) -> None:
        if self.hop <= 0 or self.tolerance <= 0:
            raise ConfigError("stitch: hop and tolerance must be positive")


@dataclass(frozen=True, slots=True)
class Hypothesis:
    tokens: tuple[int, ...]  # starts with BOS
    logprob: float
    score: float  # length-normalized
    finished: bool


def length_normalized(logprob: float, length: int, penalty: float) -> float:
    return logprob / (length**penalty)


def banned_by_ngram(tokens: Sequence[int], n: int) -> set[int]:
    """Tokens that would complete an n-gram already present in ``tokens``."""
    if n <= 0 or len(tokens) < n:
        return set()
    if n == 1:
        return set(tokens)
    context = tuple(tokens[len(tokens) - n + 1 :])
    return {
        tokens[i + n - 1]
        for i in range(len(tokens) - n + 1)
        if tuple(tokens[i : i + n - 1]) == context
    }


def beam_search(
    step_fn: StepFn,
    *,
    beam_size: int,
    max_len: int,
    bos: int = BOS,
    eos: int = EOS,
    no_repeat_ngram: int = 2,
    length_penalty: float = 1.0,
    banned: Iterable[int] = (),
) -> Hypothesis:
    """Length-normalized beam search from ``bos``.

    ``step_fn`` maps a list of prefixes to an array of next-token log-probs
    (one row per prefix). ``max_len`` bounds the number of generated tokens,
    EOS included. At each step the ``beam_size`` best extensions are kept;
    those ending in EOS retire into the finished pool and use up their slot.
    If nothing finishes, the best unfinished hypothesis is returned with
    ``finished=False``.
    """
    banned = sorted(set(banned))
    live: list[tuple[tuple[int, ...], float]] = [((bos,), 0.0)]
    finished: list[Hypothesis] = []
    for length in range(1, max_len + 1):
        logprobs = np.asarray(step_fn([list(t) for t, _ in live]), dtype=np.float64)
        cands: list[tuple[float, int, int]] = []
        for i, (tokens, lp) in enumerate(live):
            row = logprobs[i].copy()
            row[banned] = -np.inf
            for tok in banned_by_ngram(tokens, no_repeat_ngram):
                row[tok] = -np.inf
            for tok in np.flatnonzero(np.isfinite(row)):
                cands.append((lp + row[tok], i, int(tok)))
        cands.sort(key=lambda c: (-c[0], c[1], c[2]))
        nxt = []
        for total, i, tok in cands[:beam_size]:
            tokens = live[i][0] + (tok,)
            if tok == eos:
                finished.append(
                    Hypothesis(tokens, total, length_normalized(total, length, length_penalty), True)
                )
            else:
                nxt.append((tokens, total))
        live = nxt
        if not live:
            break
    if finished:
        return max(finished, key=lambda h: h.score)  # first maximum wins ties
    best = max(
        (
            Hypothesis(t, lp, length_normalized(lp, len(t) - 1, length_penalty), False)
            for t, lp in live
        ),
        key=lambda h: h.score,
        default=Hypothesis((bos,), 0.0, 0.0, False),
    )
    return best


def greedy_search(
    step_fn: StepFn,
    *,
    max_len: int,
    bos: int = BOS,
    eos: int = EOS,
    no_repeat_ngram: int = 2,
    length_penalty: float = 1.0,
    banned: Iterable[int] = (),
) -> Hypothesis:
    banned = sorted(set(banned))
    tokens: tuple[int, ...] = (bos,)
    total = 0.0
    for _ in range(max_len):
        row = np.asarray(step_fn([list(tokens)])[0], dtype=np.float64).copy()
        row[banned] = -np.inf
        for tok in banned_by_ngram(tokens, no_repeat_ngram):
            row[tok] = -np.inf
        if not np.isfinite(row).any():
            break
        tok = int(np.argmax(row))
        total += row[tok]
        tokens += (tok,)
        if tok == eos:
            break
    n = len(tokens) - 1
    return Hypothesis(tokens, total, length_normalized(total, max(n, 1), length_penalty), tokens[-1] == eos)


# --------------------------------------------------------------------------
# transformer adapters


def non_target_ids(vocab: Vocabulary) -> list[int]:
    """Ids that may never appear in a beat target after BOS."""
    allowed = {EOS}
    allowed.update(range(vocab.time_offset, vocab.time_offset + vocab.cfg.n_time_tokens))
    allowed.update(range(vocab.beat_offset, len(vocab)))
    return [i for i in range(len(vocab)) if i not in allowed]


def transformer_step_fn(model: Seq2SeqTransformer, input_ids: Sequence[int]) -> StepFn:
    model.eval()
    dtype = next(model.parameters()).dtype
    with torch.no_grad():
        src = torch.tensor([list(input_ids)], dtype=torch.long)
        mask = src != PAD
        enc = model.encode(src, mask)

    def step(prefixes: list[list[int]]) -> np.ndarray:
        with torch.no_grad():
            tgt = torch.tensor(prefixes, dtype=torch.long)
            n = tgt.size(0)
            logits = model.decode(enc.expand(n, -1, -1), mask.expand(n, -1), tgt)[:, -1]
            return torch.log_softmax(logits.to(dtype), -1).double().numpy()

    return step


def beam_search_decode(
    model: Seq2SeqTransformer, input_ids: Sequence[int], vocab: Vocabulary, cfg: DecodeConfig
) -> Hypothesis:
    max_len = min(cfg.max_target_len, model.cfg.max_target_len) - 1
    return beam_search(
        transformer_step_fn(model, input_ids),
        beam_size=cfg.beam_size,
        max_len=max_len,
        no_repeat_ngram=cfg.no_repeat_ngram,
        length_penalty=cfg.length_penalty,
        banned=non_target_ids(vocab),
    )


def predict_beats(
    model: Seq2SeqTransformer, input_ids: Sequence[int], vocab: Vocabulary, cfg: DecodeConfig
) -> tuple[list[BeatEvent], int]:
    hyp = beam_search_decode(model, input_ids, vocab, cfg)
    return decode_beat_tokens(hyp.tokens, vocab)


# --------------------------------------------------------------------------
# stitching


def _vote(counters: list[int]) -> int:
    """Majority counter; ties prefer a non-downbeat, then the smallest value."""
    counts = Counter(counters)
    top = max(counts.values())
    winners = [c for c, k in counts.items() if k == top]
    non_down = [c for c in winners if c != 1]
    return min(non_down) if non_down else 1


def stitch_segment_predictions(
    windows: Sequence[tuple[float, Sequence[BeatEvent]]], cfg: StitchConfig
) -> list[BeatEvent]:
    """Merge absolute-time beats from overlapping windows.

    Single-linkage clustering with threshold ``cfg.tolerance``; each cluster
    becomes one beat at its mean time with a majority-voted counter.
    """
    events = sorted((b.time, b.counter) for _, beats in windows for b in beats)
    if not events:
        return []
    clusters: list[list[tuple[float, int]]] = [[events[0]]]
    for ev in events[1:]:
        if ev[0] - clusters[-1][-1][0] <= cfg.tolerance:
            clusters[-1].append(ev)
        else:
            clusters.append([ev])
    out = []
    for cl in clusters:
        mean = math.fsum(t for t, _ in cl) / len(cl)
        out.append(BeatEvent(mean, _vote([c for _, c in cl])))
    return out


def inference_windows(duration: float, length: float, hop: float) -> list[float]:
    """Regular window starts plus one window flush with the end of the piece."""
    starts = window_starts(duration, length, hop)
    if starts and starts[-1] + length < duration:
        starts.append(duration - length)
    return starts


def track_beats_end_to_end(
    piece: Piece,
    model: Seq2SeqTransformer,
    vocab: Vocabulary,
    decode_cfg: DecodeConfig,
    stitch_cfg: StitchConfig,
) -> list[BeatEvent]:
    """Window the notes, decode each window with beam search and stitch the results."""
    L = vocab.cfg.segment_length
    if not piece.notes:
        return []
    bare = Piece(piece.id, piece.notes, [])
    windows = []
    for i, start in enumerate(inference_windows(bare.duration, L, min(stitch_cfg.hop, L))):
        seg = cut_window(bare, start, L, i)
        if not seg.notes:
            continue
        beats, _ = predict_beats(model, encode_input(seg.notes, vocab), vocab, decode_cfg)
        windows.append((start, [BeatEvent(b.time + start, b.counter) for b in beats]))
    return stitch_segment_predictions(windows, stitch_cfg)

