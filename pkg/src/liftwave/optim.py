"""Adam optimizer with bias correction and coupled (L2-to-gradient) decay."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .autodiff import Tensor


class OptimizerError(RuntimeError):
    pass


class Adam:
    """Standard Adam over a fixed list of parameter tensors.

    Weight decay is added to the raw gradient before the moment updates
    (classical coupled form). A NaN gradient aborts with the offending
    parameter index in the message.
    """

    def __init__(
        self,
        params: Sequence[Tensor],
        lr: float = 0.02,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 0.0,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.first_moment = [np.zeros_like(p.values) for p in self.params]
        self.second_moment = [np.zeros_like(p.values) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for i, p in enumerate(self.params):
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise OptimizerError(
                    f"non-finite gradient on parameter {i} at step {t}"
                )
            if self.weight_decay:
                g = g + self.weight_decay * p.values
            m = self.first_moment[i]
            v = self.second_moment[i]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.values -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_snapshot(self):
        """Copies of parameter values, for best-epoch checkpointing."""
        return [p.values.copy() for p in self.params]

    def load_snapshot(self, snapshot):
        for p, values in zip(self.params, snapshot):
            p.values[...] = values
