"""``beatgrid`` command-line entry point.

Exit codes: 0 success, 1 usage error, 2 config validation error, 3 runtime
failure. Errors are also reported as one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import itertools
import json
import logging
import sys
import warnings
from collections import Counter
from pathlib import Path

import numpy as np
import torch

from beatgrid import pipeline
from beatgrid.codec import encode_example
from beatgrid.config import AUGMENT_PRESETS, RunConfig, from_dict, load_config
from beatgrid.decode import track_beats_end_to_end
from beatgrid.errors import BeatgridError, ConfigError, DanglingNoteOn
from beatgrid.evaluation import evaluate_corpus
from beatgrid.midi import Piece, dump_beat_tsv, load_beat_tsv, parse_midi_file
from beatgrid.model.checkpoint import load_checkpoint, save_checkpoint
from beatgrid.model.training import TrainConfig, make_optimizer, train
from beatgrid.model.transformer import Seq2SeqTransformer, init_parameters
from beatgrid.synth import synth_corpus, write_corpus

log = logging.getLogger("beatgrid")

MIDI_SUFFIXES = (".mid", ".midi")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit with status 2
        raise UsageError(message)


# --------------------------------------------------------------------------
# helpers


def _midi_files(path: Path) -> list[Path]:
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise UsageError(f"{path} does not exist")
    return sorted(p for p in path.iterdir() if p.suffix.lower() in MIDI_SUFFIXES)


def load_piece(path: Path, max_counter: int = 12) -> Piece:
    """Parse a MIDI file; a sibling ``.tsv`` overrides the beats derived from the file."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DanglingNoteOn)
        piece = parse_midi_file(path.read_bytes(), path.stem)
    tsv = path.with_suffix(".tsv")
    if tsv.exists():
        piece = Piece(piece.id, piece.notes, load_beat_tsv(tsv.read_text(encoding="utf-8"), max_counter))
    return piece


def _preprocess(cfg: RunConfig, midi_dir: Path) -> list[pipeline.Segment]:
    segments = []
    for path in _midi_files(midi_dir):
        piece = load_piece(path, cfg.codec.max_counter)
        segments += pipeline.clean_segments(pipeline.segment_piece(piece, cfg.pipeline), cfg.pipeline)
    return segments


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _train_model(cfg: RunConfig, segments, metrics_path: Path | None):
    vocab = cfg.vocabulary()
    model = init_parameters(cfg.model_config(), seed=cfg.seed)
    tc = dataclasses.replace(cfg.train, rng_seed=cfg.seed)
    optimizer, scheduler = make_optimizer(model, tc)
    fh = open(metrics_path, "w", encoding="utf-8") if metrics_path else None
    try:
        sink = (lambda line: fh.write(line + "\n")) if fh else None
        optimizer, history = train(
            model, segments, vocab, tc, augment=cfg.augment, metrics=sink,
            optimizer=optimizer, scheduler=scheduler,
        )
    finally:
        if fh:
            fh.close()
    return model, optimizer, tc, len(history)


def _checkpoint_bytes(cfg: RunConfig, model, optimizer, tc: TrainConfig, step: int) -> bytes:
    return save_checkpoint(
        model.cfg,
        model.state_dict(),
        opt_state=optimizer.state_dict(),
        train_config=tc.to_dict(),
        step=step,
        extra={"run_config": cfg.to_dict()},
    )


def _model_from_checkpoint(path: Path) -> tuple[Seq2SeqTransformer, RunConfig]:
    ckpt = load_checkpoint(path.read_bytes())
    run_cfg = from_dict(ckpt.extra.get("run_config", {}))
    model = Seq2SeqTransformer(ckpt.model_config)
    model.load_state_dict(ckpt.params)
    model.eval()
    return model, run_cfg


# --------------------------------------------------------------------------
# subcommands


def cmd_preprocess(args, cfg: RunConfig) -> int:
    segments = _preprocess(cfg, Path(args.input))
    _write_text(Path(args.out), pipeline.dumps(segments))
    print(json.dumps({"segments": len(segments), "out": str(args.out)}))
    return 0


def cmd_tokenize(args, cfg: RunConfig) -> int:
    vocab = cfg.vocabulary()
    segments = pipeline.loads(Path(args.data).read_text(encoding="utf-8"))
    in_lens, out_lens = [], []
    counts: Counter[str] = Counter()
    golden = []
    for seg in segments:
        x, y = encode_example(seg, vocab)
        in_lens.append(len(x))
        out_lens.append(len(y))
        counts.update(vocab.tokens[i].split("⟨")[0] for i in x + y)
        if len(golden) < args.samples:
            golden.append(f"# {seg.piece_id}#{seg.index}\n{vocab.render(x)}\n{vocab.render(y)}\n")

    def describe(v):
        return {"min": min(v), "max": max(v), "mean": round(float(np.mean(v)), 3)} if v else {}

    stats = {
        "segments": len(segments),
        "vocab_size": len(vocab),
        "scheme": cfg.codec.scheme.value,
        "step": cfg.codec.step,
        "input_length": describe(in_lens),
        "target_length": describe(out_lens),
        "token_kinds": dict(sorted(counts.items())),
    }
    out = Path(args.out)
    _write_text(out / "stats.json", json.dumps(stats, indent=2, sort_keys=True) + "\n")
    _write_text(out / "golden.txt", "".join(golden))
    print(json.dumps(stats, sort_keys=True))
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    torch.set_num_threads(args.threads)
    segments = pipeline.loads(Path(args.data).read_text(encoding="utf-8"))
    if not segments:
        raise UsageError("dataset is empty")
    model, optimizer, tc, steps = _train_model(cfg, segments, Path(args.metrics) if args.metrics else None)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(_checkpoint_bytes(cfg, model, optimizer, tc, steps))
    print(json.dumps({"steps": steps, "checkpoint": str(out)}))
    return 0


def cmd_infer(args, cfg: RunConfig) -> int:
    torch.set_num_threads(args.threads)
    model, ckpt_cfg = _model_from_checkpoint(Path(args.checkpoint))
    if args.config:
        if cfg.codec != ckpt_cfg.codec:
            raise ConfigError("codec section does not match the checkpoint")
        ckpt_cfg = ckpt_cfg.replace(decode=cfg.decode, stitch=cfg.stitch)
    vocab = ckpt_cfg.vocabulary()
    src = Path(args.input)
    files = _midi_files(src)
    out = Path(args.out)
    for path in files:
        piece = load_piece(path, ckpt_cfg.codec.max_counter)
        beats = track_beats_end_to_end(piece, model, vocab, ckpt_cfg.decode, ckpt_cfg.stitch)
        target = out / f"{path.stem}.tsv" if src.is_dir() else out
        _write_text(target, dump_beat_tsv(beats))
    print(json.dumps({"pieces": len(files), "out": str(out)}))
    return 0


def _pairs_from_paths(ref: Path, est: Path, max_counter: int):
    if ref.is_dir():
        pairs = []
        for r in sorted(ref.glob("*.tsv")):
            e = est / r.name
            if not e.exists():
                raise UsageError(f"missing estimate for {r.name}")
            pairs.append((r.stem, r, e))
    else:
        pairs = [(ref.stem, ref, est)]
    return [
        (pid, load_beat_tsv(r.read_text(encoding="utf-8"), max_counter), load_beat_tsv(e.read_text(encoding="utf-8"), max_counter))
        for pid, r, e in pairs
    ]


def cmd_evaluate(args, cfg: RunConfig) -> int:
    pairs = _pairs_from_paths(Path(args.ref), Path(args.est), cfg.codec.max_counter)
    result = evaluate_corpus(pairs, cfg.eval, weighted=args.weighted)
    if args.out:
        out = Path(args.out)
        _write_text(out / "report.csv", result.to_csv())
        _write_text(out / "summary.json", result.to_json())
    print(result.to_json(), end="")
    return 0


def _sweep_cells(cfg: RunConfig):
    axes = {axis: cfg.sweep.get(axis) for axis in ("scheme", "segment_length", "step", "augment")}
    defaults = {
        "scheme": [cfg.codec.scheme.value],
        "segment_length": [cfg.pipeline.segment_length],
        "step": [cfg.codec.step],
        "augment": ["none"],
    }
    grid = {k: v or defaults[k] for k, v in axes.items()}
    for scheme, length, step, aug in itertools.product(*grid.values()):
        data = cfg.to_dict()
        data["sweep"] = {}
        data["pipeline"]["segment_length"] = length
        data["pipeline"]["hop"] = min(data["pipeline"]["hop"], length)
        data["codec"].update(scheme=scheme, step=step, segment_length=length)
        data["stitch"]["hop"] = min(data["stitch"]["hop"], length)
        data["model"].pop("vocab_size", None)
        data["augment"] = {**data["augment"], **{k: False for k in ("enable_transpose", "enable_shift", "enable_scale")}, **AUGMENT_PRESETS[aug]}
        yield {"scheme": scheme, "segment_length": length, "step": step, "augment": aug}, from_dict(data)


def cmd_sweep(args, cfg: RunConfig) -> int:
    torch.set_num_threads(args.threads)
    train_dir, test_dir, out = Path(args.train_dir), Path(args.test_dir), Path(args.out)
    test_pieces = [load_piece(p, cfg.codec.max_counter) for p in _midi_files(test_dir)]
    rows = []
    for cell, cell_cfg in _sweep_cells(cfg):
        segments = _preprocess(cell_cfg, train_dir)
        model, *_ = _train_model(cell_cfg, segments, None)
        vocab = cell_cfg.vocabulary()
        pairs = [
            (p.id, p.beats, track_beats_end_to_end(p, model, vocab, cell_cfg.decode, cell_cfg.stitch))
            for p in test_pieces
        ]
        summary = evaluate_corpus(pairs, cell_cfg.eval).summary
        rows.append({**cell, "segments": len(segments), "f_b": summary.f_b, "f_db": summary.f_db})
        log.info("sweep cell %s: f_b=%.4f f_db=%.4f", cell, summary.f_b, summary.f_db)
    header = ["scheme", "segment_length", "step", "augment", "segments", "f_b", "f_db"]
    lines = [",".join(header)]
    for r in rows:
        lines.append(
            f"{r['scheme']},{r['segment_length']},{r['step']},{r['augment']},{r['segments']},{r['f_b']:.6f},{r['f_db']:.6f}"
        )
    _write_text(out / "sweep.csv", "\n".join(lines) + "\n")
    print(json.dumps({"cells": len(rows), "out": str(out / "sweep.csv")}))
    return 0


def cmd_synth(args, cfg: RunConfig) -> int:
    pieces = synth_corpus(
        cfg.seed, args.pieces, prefix=args.prefix,
        min_duration=args.min_duration, max_duration=args.max_duration,
    )
    write_corpus(Path(args.out), pieces)
    print(json.dumps({"pieces": len(pieces), "out": str(args.out)}))
    return 0


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--seed", type=int, help="global seed (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="torch intra-op threads")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="beatgrid", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preprocess", parents=[common], help="MIDI directory -> dataset CSV")
    p.add_argument("--input", required=True, help="MIDI file or directory")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("tokenize", parents=[common], help="dataset CSV -> token statistics")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--samples", type=int, default=8, help="golden samples to render")
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("train", parents=[common], help="dataset CSV -> checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--metrics", help="JSON-lines training log")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", parents=[common], help="MIDI + checkpoint -> beat TSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="MIDI file or directory")
    p.add_argument("--out", required=True, help="TSV file, or directory for directory input")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("evaluate", parents=[common], help="beat F-measure report")
    p.add_argument("--ref", required=True, help="reference TSV or directory")
    p.add_argument("--est", required=True, help="estimated TSV or directory")
    p.add_argument("--out", help="report directory")
    p.add_argument("--weighted", action="store_true", help="weight pieces by beat count")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", parents=[common], help="ablation grid from the config's sweep section")
    p.add_argument("--train-dir", required=True)
    p.add_argument("--test-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", parents=[common], help="write a seeded synthetic corpus")
    p.add_argument("--pieces", type=int, default=64)
    p.add_argument("--out", required=True)
    p.add_argument("--prefix", default="synth")
    p.add_argument("--min-duration", type=float, default=10.0)
    p.add_argument("--max-duration", type=float, default=20.0)
    p.set_defaults(func=cmd_synth)
    return parser


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _fail(1, "usage", str(exc))
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as exc:
        return _fail(2, "config", str(exc))
    try:
        return args.func(args, cfg)
    except UsageError as exc:
        return _fail(1, "usage", str(exc))
    except ConfigError as exc:
        return _fail(2, "config", str(exc))
    except (BeatgridError, OSError) as exc:
        return _fail(3, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
