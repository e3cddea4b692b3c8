"""AdamW with decoupled weight decay, plus the warmup/cosine LR schedule.

Update math runs in float64 and is rounded back to the parameter dtype, in
line with the package-wide storage/accumulation split. Moments are kept in
float32 alongside the parameters they track.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import ContractError
from .tensor import Tensor


@dataclass
class LrSchedule:
    """Linear warmup from zero to lr_max, then cosine decay to lr_min."""

    lr_max: float = 1e-4
    lr_min: float = 1e-5
    warmup_steps: int = 1000
    total_steps: int = 10000


def lr_at(step: int, schedule: LrSchedule) -> float:
    """Learning rate at `step`, valid for 0 <= step <= total_steps."""
    s = schedule
    if step < 0 or step > s.total_steps:
        raise ContractError(f"step {step} outside [0, {s.total_steps}]")
    if s.warmup_steps > 0 and step <= s.warmup_steps:
        return s.lr_max * (step / s.warmup_steps)
    span = s.total_steps - s.warmup_steps
    if span <= 0:
        return s.lr_min
    frac = (step - s.warmup_steps) / span
    return s.lr_min + 0.5 * (s.lr_max - s.lr_min) * (1.0 + math.cos(math.pi * frac))


def clip_global_norm(params: Iterable[Tensor], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm.

    Returns the pre-clip norm. Parameters without a gradient are skipped.
    """
    grads = [p.grad for p in params if p.grad is not None]
    total = 0.0
    for g in grads:
        total += float(np.sum(g.astype(np.float64) ** 2))
    norm = math.sqrt(total)
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= np.asarray(scale, dtype=g.dtype)
    return norm


class AdamW:
    """Adam with bias correction and decoupled weight decay.

    With zero gradient and nonzero weight decay a parameter contracts by the
    factor (1 - lr * weight_decay) per step; with lr == 0 and weight_decay == 0
    the step leaves parameters untouched.
    """

    def __init__(self, params: dict[str, Tensor], beta1: float = 0.8,
                 beta2: float = 0.99, eps: float = 1e-9,
                 weight_decay: float = 0.01):
        self.params = dict(params)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, lr: float) -> None:
        """Apply one update using each parameter's accumulated gradient."""
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad.astype(np.float64)
            if not np.isfinite(g).all():
                raise ContractError(f"non-finite gradient for parameter '{name}'")
            m = self.beta1 * self.m[name].astype(np.float64) + (1.0 - self.beta1) * g
            v = self.beta2 * self.v[name].astype(np.float64) + (1.0 - self.beta2) * g * g
            self.m[name] = m.astype(p.data.dtype)
            self.v[name] = v.astype(p.data.dtype)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.data.astype(np.float64)
            p.data -= (lr * update).astype(p.data.dtype)
            p.version += 1
