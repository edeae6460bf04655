"""Adafactor with factored second moments, relative step size and update clipping.

Hyperparameters follow the published defaults: no first moment, decay
``1 - t^-0.8``, ``eps1 = 1e-30``, ``eps2 = 1e-3``, clipping threshold 1 and
step size ``max(eps2, RMS(param)) * min(1e-2, 1/sqrt(t))``.
"""

from __future__ import annotations

import math

import torch
from torch.optim import Optimizer

from beatgrid.errors import ShapeMismatch


def _rms(x: torch.Tensor) -> torch.Tensor:
    return x.pow(2).mean().sqrt()


def relative_step_size(step: int) -> float:
    return min(1e-2, 1.0 / math.sqrt(step))


def adafactor_update(
    param: torch.Tensor,
    grad: torch.Tensor,
    state: dict,
    step: int,
    *,
    factored: bool | None = None,
    eps1: float = 1e-30,
    eps2: float = 1e-3,
    clip_threshold: float = 1.0,
    decay_rate: float = 0.8,
) -> tuple[torch.Tensor, dict]:
    """One update of a single tensor; returns the new tensor and new state.

    ``state`` holds ``row``/``col`` factors for matrices (last two axes) or a
    full ``v`` otherwise. ``factored=False`` forces the full second moment.
    ``step`` is 1-based.
    """
    if param.shape != grad.shape:
        raise ShapeMismatch(f"param {tuple(param.shape)} vs grad {tuple(grad.shape)}")
    if step < 1:
        raise ValueError("step is 1-based")
    if factored is None:
        factored = grad.dim() >= 2
    beta2 = 1.0 - step ** (-decay_rate)
    sq = grad.pow(2) + eps1

    if factored:
        row = state.get("row", torch.zeros(grad.shape[:-1], dtype=grad.dtype))
        col = state.get("col", torch.zeros(grad.shape[:-2] + grad.shape[-1:], dtype=grad.dtype))
        row = beta2 * row + (1 - beta2) * sq.sum(-1)
        col = beta2 * col + (1 - beta2) * sq.sum(-2)
        v_hat = row.unsqueeze(-1) * col.unsqueeze(-2) / row.sum(-1, keepdim=True).unsqueeze(-1)
        new_state = {"row": row, "col": col}
    else:
        v = state.get("v", torch.zeros_like(grad))
        v = beta2 * v + (1 - beta2) * sq
        v_hat = v
        new_state = {"v": v}

    update = grad / v_hat.sqrt()
    update = update / max(1.0, float(_rms(update)) / clip_threshold)
    lr = max(eps2, float(_rms(param))) * relative_step_size(step)
    return param - lr * update, new_state


class Adafactor(Optimizer):
    """``torch.optim`` wrapper around :func:`adafactor_update`."""

    def __init__(self, params, eps1: float = 1e-30, eps2: float = 1e-3, clip_threshold: float = 1.0, decay_rate: float = 0.8):
        defaults = dict(eps1=eps1, eps2=eps2, clip_threshold=clip_threshold, decay_rate=decay_rate)
        super().__init__(params, defaults)

    def current_lr(self) -> float:
        """Relative step size of the most recent update (0 before the first step)."""
        for group in self.param_groups:
            for p in group["params"]:
                step = self.state[p].get("step", 0)
                return relative_step_size(step) if step else 0.0
        return 0.0

    @torch.no_grad()
    def step(self, closure=None):
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()
        for group in self.param_groups:
            for p in group["params"]:
                if p.grad is None:
                    continue
                state = self.state[p]
                state["step"] = step = state.get("step", 0) + 1
                moments = {k: v for k, v in state.items() if k != "step"}
                new_p, moments = adafactor_update(
                    p.detach(),
                    p.grad,
                    moments,
                    step,
                    eps1=group["eps1"],
                    eps2=group["eps2"],
                    clip_threshold=group["clip_threshold"],
                    decay_rate=group["decay_rate"],
                )
                p.copy_(new_p)
                state.update(moments)
        return loss


def inverse_sqrt_schedule(warmup: int):
    """Linear warmup to 1 over ``warmup`` steps, then decay as ``sqrt(warmup / step)``."""

    def factor(step: int) -> float:
        step = max(step, 1)
        return min(step / warmup, math.sqrt(warmup / step))

    return factor
