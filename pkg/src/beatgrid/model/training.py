"""Teacher-forced training loop."""

from __future__ import annotations

import json
import logging
import time
from collections.abc import Callable, Sequence
from dataclasses import asdict, dataclass

import numpy as np
import torch
import torch.nn.functional as F

from beatgrid.augment import AugmentConfig, augment_segment, segment_rng
from beatgrid.codec import PAD, Vocabulary, encode_example
from beatgrid.errors import ConfigError, NonFiniteLoss
from beatgrid.model.adafactor import Adafactor, inverse_sqrt_schedule
from beatgrid.model.transformer import Seq2SeqTransformer
from beatgrid.pipeline import Segment

log = logging.getLogger(__name__)

Example = tuple[list[int], list[int]]


@dataclass(frozen=True, slots=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 32
    optimizer: str = "adafactor"  # or "adam-fallback"
    label_smoothing: float = 0.0
    rng_seed: int = 0
    checkpoint_every: int = 0  # steps; 0 = only at the end
    max_steps: int = 0  # 0 = no cap
    adam_lr: float = 1e-3
    warmup_steps: int = 4000

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ConfigError("train: batch_size must be >= 1")
        if self.optimizer not in ("adafactor", "adam-fallback"):
            raise ConfigError(f"train: unknown optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Batch:
    inputs: torch.Tensor  # (B, S)
    targets: torch.Tensor  # (B, T), BOS ... EOS, PAD-filled

    def __len__(self) -> int:
        return self.inputs.size(0)


def collate(examples: Sequence[Example]) -> Batch:
    s = max(len(x) for x, _ in examples)
    t = max(len(y) for _, y in examples)
    inputs = torch.full((len(examples), s), PAD, dtype=torch.long)
    targets = torch.full((len(examples), t), PAD, dtype=torch.long)
    for i, (x, y) in enumerate(examples):
        inputs[i, : len(x)] = torch.tensor(x)
        targets[i, : len(y)] = torch.tensor(y)
    return Batch(inputs, targets)


def sequence_loss(model: Seq2SeqTransformer, batch: Batch, label_smoothing: float = 0.0) -> torch.Tensor:
    """Mean token cross-entropy over non-pad target positions."""
    logits = model(batch.inputs, batch.targets[:, :-1])
    labels = batch.targets[:, 1:]
    return F.cross_entropy(
        logits.reshape(-1, logits.size(-1)),
        labels.reshape(-1),
        ignore_index=PAD,
        label_smoothing=label_smoothing,
    )


def make_optimizer(model: Seq2SeqTransformer, cfg: TrainConfig):
    """Returns ``(optimizer, scheduler_or_None)``."""
    if cfg.optimizer == "adafactor":
        return Adafactor(model.parameters()), None
    opt = torch.optim.Adam(model.parameters(), lr=cfg.adam_lr, betas=(0.9, 0.98), eps=1e-9)
    sched = torch.optim.lr_scheduler.LambdaLR(opt, inverse_sqrt_schedule(cfg.warmup_steps))
    return opt, sched


def current_lr(optimizer, scheduler) -> float:
    if scheduler is not None:
        return scheduler.get_last_lr()[0]
    return optimizer.current_lr()


def training_step(model, batch: Batch, optimizer, cfg: TrainConfig, scheduler=None) -> float:
    model.train()
    optimizer.zero_grad(set_to_none=True)
    loss = sequence_loss(model, batch, cfg.label_smoothing)
    if not torch.isfinite(loss):
        raise NonFiniteLoss(
            f"loss={loss.item()} batch={tuple(batch.inputs.shape)}/{tuple(batch.targets.shape)}"
        )
    loss.backward()
    optimizer.step()
    if scheduler is not None:
        scheduler.step()
    return loss.item()


def encode_segments(
    segments: Sequence[Segment],
    vocab: Vocabulary,
    max_input_len: int,
    max_target_len: int,
) -> list[Example]:
    """Encode segments, skipping any whose sequences exceed the model limits."""
    out = []
    for seg in segments:
        x, y = encode_example(seg, vocab)
        if len(x) > max_input_len or len(y) > max_target_len:
            log.warning("skipping %s#%d: %d/%d tokens", seg.piece_id, seg.index, len(x), len(y))
            continue
        out.append((x, y))
    return out


def epoch_examples(
    segments: Sequence[Segment],
    vocab: Vocabulary,
    model_cfg,
    augment: AugmentConfig | None,
    epoch: int,
) -> list[Example]:
    if augment is None or not augment.enabled:
        return encode_segments(segments, vocab, model_cfg.max_input_len, model_cfg.max_target_len)
    L = vocab.cfg.segment_length
    augmented = []
    for seg in segments:
        rng = segment_rng(augment.rng_seed, seg.piece_id, seg.index, epoch)
        out = augment_segment(seg, augment, rng, L)
        if out is not None:
            augmented.append(out)
    return encode_segments(augmented, vocab, model_cfg.max_input_len, model_cfg.max_target_len)


MetricsSink = Callable[[str], object]


def train(
    model: Seq2SeqTransformer,
    segments: Sequence[Segment],
    vocab: Vocabulary,
    cfg: TrainConfig,
    *,
    augment: AugmentConfig | None = None,
    metrics: MetricsSink | None = None,
    on_checkpoint: Callable[[int, object], None] | None = None,
    optimizer=None,
    scheduler=None,
    start_step: int = 0,
) -> tuple[object, list[float]]:
    """Train in place; returns ``(optimizer, loss history)``.

    Batch order is a seeded permutation per epoch. ``metrics`` receives one
    JSON line per step.
    """
    if optimizer is None:
        optimizer, scheduler = make_optimizer(model, cfg)
    torch.manual_seed(cfg.rng_seed)
    history: list[float] = []
    step = start_step
    static = None
    if augment is None or not augment.enabled:
        static = epoch_examples(segments, vocab, model.cfg, None, 0)
    for epoch in range(cfg.epochs):
        examples = static if static is not None else epoch_examples(segments, vocab, model.cfg, augment, epoch)
        order = np.random.default_rng([cfg.rng_seed, epoch]).permutation(len(examples))
        for b in range(0, len(order), cfg.batch_size):
            batch = collate([examples[i] for i in order[b : b + cfg.batch_size]])
            tic = time.perf_counter()
            loss = training_step(model, batch, optimizer, cfg, scheduler)
            step += 1
            history.append(loss)
            if metrics is not None:
                record = {
                    "step": step,
                    "loss": loss,
                    "lr": current_lr(optimizer, scheduler),
                    "wall_ms": round((time.perf_counter() - tic) * 1000, 3),
                }
                metrics(json.dumps(record))
            if on_checkpoint is not None and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
                on_checkpoint(step, optimizer)
            if cfg.max_steps and step >= cfg.max_steps:
                return optimizer, history
    return optimizer, history

