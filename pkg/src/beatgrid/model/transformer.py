"""Compact T5-style encoder-decoder with relative position bias."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F
from torch import nn

from beatgrid.errors import ConfigError, LengthOverflow

PAD_ID = 0


@dataclass(frozen=True, slots=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 128
    d_ff: int = 1024
    num_layers: int = 3
    num_heads: int = 4
    dropout: float = 0.1
    num_buckets: int = 32
    max_distance: int = 128
    max_input_len: int = 2048
    max_target_len: int = 256

    def __post_init__(self) -> None:
        if self.d_model % self.num_heads:
            raise ConfigError("model: d_model must be divisible by num_heads")
        if self.vocab_size < 5 or self.num_layers < 1:
            raise ConfigError("model: vocab_size >= 5 and num_layers >= 1 required")

    @property
    def d_head(self) -> int:
        return self.d_model // self.num_heads

    def to_dict(self) -> dict:
        return asdict(self)


def relative_position_bucket(
    relative_position: torch.Tensor, bidirectional: bool, num_buckets: int, max_distance: int
) -> torch.Tensor:
    """Map key-minus-query offsets to buckets: exact for small offsets, log-spaced beyond."""
    buckets = torch.zeros_like(relative_position)
    if bidirectional:
        num_buckets //= 2
        buckets += (relative_position > 0).long() * num_buckets
        n = relative_position.abs()
    else:
        n = (-relative_position).clamp(min=0)
    max_exact = num_buckets // 2
    is_small = n < max_exact
    large = max_exact + (
        torch.log(n.float().clamp(min=1) / max_exact)
        / math.log(max_distance / max_exact)
        * (num_buckets - max_exact)
    ).long()
    large = large.clamp(max=num_buckets - 1)
    return buckets + torch.where(is_small, n, large)


class RMSNorm(nn.Module):
    """Scale-only layer norm without mean subtraction."""

    def __init__(self, dim: int, eps: float = 1e-6) -> None:
        super().__init__()
        self.weight = nn.Parameter(torch.ones(dim))
        self.eps = eps

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * torch.rsqrt(x.pow(2).mean(-1, keepdim=True) + self.eps) * self.weight


class RelativePositionBias(nn.Module):
    def __init__(self, cfg: ModelConfig, bidirectional: bool) -> None:
        super().__init__()
        self.bidirectional = bidirectional
        self.num_buckets = cfg.num_buckets
        self.max_distance = cfg.max_distance
        self.table = nn.Embedding(cfg.num_buckets, cfg.num_heads)

    def forward(self, q_len: int, k_len: int) -> torch.Tensor:
        device = self.table.weight.device
        rel = torch.arange(k_len, device=device)[None, :] - torch.arange(q_len, device=device)[:, None]
        buckets = relative_position_bucket(rel, self.bidirectional, self.num_buckets, self.max_distance)
        return self.table(buckets).permute(2, 0, 1).unsqueeze(0)  # (1, heads, q, k)


def attention_probs(
    q: torch.Tensor, k: torch.Tensor, bias: torch.Tensor | None, mask: torch.Tensor | None
) -> torch.Tensor:
    """Softmax attention weights; ``mask`` broadcasts to (batch, heads, q, k), True = attend."""
    scores = q @ k.transpose(-1, -2) / math.sqrt(q.size(-1))
    if bias is not None:
        scores = scores + bias
    if mask is not None:
        scores = scores.masked_fill(~mask, torch.finfo(scores.dtype).min)
    return scores.softmax(-1)


class Attention(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.h = cfg.num_heads
        self.d = cfg.d_head
        self.q = nn.Linear(cfg.d_model, cfg.d_model, bias=False)
        self.k = nn.Linear(cfg.d_model, cfg.d_model, bias=False)
        self.v = nn.Linear(cfg.d_model, cfg.d_model, bias=False)
        self.o = nn.Linear(cfg.d_model, cfg.d_model, bias=False)
        self.dropout = nn.Dropout(cfg.dropout)

    def _split(self, x: torch.Tensor) -> torch.Tensor:
        b, n, _ = x.shape
        return x.view(b, n, self.h, self.d).transpose(1, 2)

    def forward(self, x, kv, bias, mask):
        q, k, v = self._split(self.q(x)), self._split(self.k(kv)), self._split(self.v(kv))
        probs = self.dropout(attention_probs(q, k, bias, mask))
        out = (probs @ v).transpose(1, 2).reshape(x.shape[0], x.shape[1], -1)
        return self.o(out)


class FeedForward(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.wi = nn.Linear(cfg.d_model, cfg.d_ff, bias=False)
        self.wo = nn.Linear(cfg.d_ff, cfg.d_model, bias=False)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x):
        return self.wo(self.dropout(F.relu(self.wi(x))))


class EncoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.norm1 = RMSNorm(cfg.d_model)
        self.attn = Attention(cfg)
        self.norm2 = RMSNorm(cfg.d_model)
        self.ff = FeedForward(cfg)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x, bias, mask):
        h = self.norm1(x)
        x = x + self.dropout(self.attn(h, h, bias, mask))
        return x + self.dropout(self.ff(self.norm2(x)))


class DecoderLayer(nn.Module):
    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.norm1 = RMSNorm(cfg.d_model)
        self.self_attn = Attention(cfg)
        self.norm2 = RMSNorm(cfg.d_model)
        self.cross_attn = Attention(cfg)
        self.norm3 = RMSNorm(cfg.d_model)
        self.ff = FeedForward(cfg)
        self.dropout = nn.Dropout(cfg.dropout)

    def forward(self, x, enc, self_bias, self_mask, cross_mask):
        h = self.norm1(x)
        x = x + self.dropout(self.self_attn(h, h, self_bias, self_mask))
        x = x + self.dropout(self.cross_attn(self.norm2(x), enc, None, cross_mask))
        return x + self.dropout(self.ff(self.norm3(x)))


class Seq2SeqTransformer(nn.Module):
    """Pre-norm encoder-decoder with a shared input/output embedding.

    Relative position biases are computed once per stack and reused by every
    layer; the decoder's are unidirectional.
    """

    def __init__(self, cfg: ModelConfig) -> None:
        super().__init__()
        self.cfg = cfg
        self.embed = nn.Embedding(cfg.vocab_size, cfg.d_model)
        self.enc_bias = RelativePositionBias(cfg, bidirectional=True)
        self.dec_bias = RelativePositionBias(cfg, bidirectional=False)
        self.encoder = nn.ModuleList(EncoderLayer(cfg) for _ in range(cfg.num_layers))
        self.decoder = nn.ModuleList(DecoderLayer(cfg) for _ in range(cfg.num_layers))
        self.enc_norm = RMSNorm(cfg.d_model)
        self.dec_norm = RMSNorm(cfg.d_model)
        self.dropout = nn.Dropout(cfg.dropout)

    def encode(self, input_ids: torch.Tensor, input_mask: torch.Tensor | None = None) -> torch.Tensor:
        if input_ids.size(1) > self.cfg.max_input_len:
            raise LengthOverflow(f"input length {input_ids.size(1)} > {self.cfg.max_input_len}")
        if input_mask is None:
            input_mask = input_ids != PAD_ID
        n = input_ids.size(1)
        bias = self.enc_bias(n, n)
        mask = input_mask[:, None, None, :]
        x = self.dropout(self.embed(input_ids))
        for layer in self.encoder:
            x = layer(x, bias, mask)
        return self.dropout(self.enc_norm(x))

    def decode(
        self, enc: torch.Tensor, input_mask: torch.Tensor, target_ids: torch.Tensor
    ) -> torch.Tensor:
        t = target_ids.size(1)
        if t > self.cfg.max_target_len:
            raise LengthOverflow(f"target length {t} > {self.cfg.max_target_len}")
        causal = torch.ones(t, t, dtype=torch.bool, device=target_ids.device).tril()
        bias = self.dec_bias(t, t)
        cross_mask = input_mask[:, None, None, :]
        x = self.dropout(self.embed(target_ids))
        for layer in self.decoder:
            x = layer(x, enc, bias, causal, cross_mask)
        x = self.dropout(self.dec_norm(x)) * self.cfg.d_model**-0.5
        return x @ self.embed.weight.t()

    def forward(
        self,
        input_ids: torch.Tensor,
        target_ids: torch.Tensor,
        input_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Logits of shape (batch, target_len, vocab_size) for a teacher-forced prefix."""
        if input_mask is None:
            input_mask = input_ids != PAD_ID
        return self.decode(self.encode(input_ids, input_mask), input_mask, target_ids)


def init_parameters(cfg: ModelConfig, seed: int = 0, dtype: torch.dtype = torch.float32) -> Seq2SeqTransformer:
    """Build a model with deterministic weights.

    Embeddings and projections are drawn from N(0, 1/d_model); norm gains are
    one and relative position tables start at zero.
    """
    model = Seq2SeqTransformer(cfg).to(dtype)
    gen = torch.Generator().manual_seed(seed)
    std = cfg.d_model**-0.5
    gains = {id(m.weight) for m in model.modules() if isinstance(m, RMSNorm)}
    tables = {id(m.table.weight) for m in model.modules() if isinstance(m, RelativePositionBias)}
    with torch.no_grad():
        for p in model.parameters():
            if id(p) in gains:
                p.fill_(1.0)
            elif id(p) in tables:
                p.zero_()
            else:
                p.copy_(torch.randn(p.shape, generator=gen, dtype=torch.float64).to(dtype) * std)
    return model


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
