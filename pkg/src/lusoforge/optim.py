"""Adam with decoupled weight decay, keyed by parameter name.

Moment buffers live in plain float32 numpy arrays parallel to the parameter
dict. step() checks every gradient for NaN/inf before touching parameters
and aborts with the offending parameter's name, so a poisoned update never
lands.
"""

from __future__ import annotations

import numpy as np

from lusoforge.autodiff import Tensor
from lusoforge.errors import NumericalError


class Adam:
    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-6,
        weight_decay: float = 0.01,
        decay_skip: tuple[str, ...] = (".b", "bias", "gain", "ln."),
    ):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self._skip = decay_skip
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def _decays(self, name: str) -> bool:
        return not any(tag in name for tag in self._skip)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def step(self):
        """One update over every parameter that has a gradient."""
        for name, p in self.params.items():
            if p.grad is None:
                continue
            if not np.all(np.isfinite(p.grad)):
                raise NumericalError(f"non-finite gradient in parameter '{name}'")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1**self.t
        bc2 = 1.0 - b2**self.t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay and self._decays(name):
                update = update + self.weight_decay * p.data
            p.data = (p.data - self.lr * update).astype(p.data.dtype, copy=False)

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Moment buffers keyed for checkpointing."""
        out: dict[str, np.ndarray] = {}
        for k in self.params:
            out[f"adam.m.{k}"] = self.m[k]
            out[f"adam.v.{k}"] = self.v[k]
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], t: int):
        for k in self.params:
            self.m[k] = arrays[f"adam.m.{k}"].copy()
            self.v[k] = arrays[f"adam.v.{k}"].copy()
        self.t = t
