"""Finite-difference gradient verification.

Central differences with h = 1e-3, compared entry-by-entry against analytic
gradients under |analytic - numeric| <= atol + rtol * |numeric|. Checking
every entry of every parameter is quadratic in model size, so by default a
deterministic sample of entries per tensor is verified instead. Models being
checked should be built in float64; float32 rounding noise at h = 1e-3 is
larger than the absolute floor.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from lusoforge.autodiff import Tensor, backward


@dataclass
class GradCheckResult:
    passed: bool
    checked: int
    worst_abs: float
    worst_rel: float
    failures: list[tuple[str, int, float, float]] = field(default_factory=list)

    def summary(self) -> str:
        status = "ok" if self.passed else "FAIL"
        return (
            f"gradcheck {status}: {self.checked} entries, "
            f"worst |a-n|={self.worst_abs:.3e}, worst rel={self.worst_rel:.3e}, "
            f"{len(self.failures)} failures"
        )


def check_gradients(
    loss_fn,
    params: dict[str, Tensor],
    h: float = 1e-3,
    rtol: float = 1e-2,
    atol: float = 1e-6,
    sample_per_tensor: int = 8,
    seed: int = 0,
) -> GradCheckResult:
    """Compare analytic gradients of `loss_fn()` against central differences.

    loss_fn must rebuild the graph from `params` on every call and return a
    scalar Tensor. Entries are sampled per tensor with a fixed seed so runs
    are reproducible.
    """
    loss = loss_fn()
    for p in params.values():
        p.grad = None
    backward(loss)
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for k, p in params.items()}

    rng = np.random.default_rng(seed)
    failures: list[tuple[str, int, float, float]] = []
    checked = 0
    worst_abs = 0.0
    worst_rel = 0.0

    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if n <= sample_per_tensor:
            idxs = np.arange(n)
        else:
            idxs = rng.choice(n, size=sample_per_tensor, replace=False)
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + h
            up = float(loss_fn().data)
            flat[i] = orig - h
            dn = float(loss_fn().data)
            flat[i] = orig
            numeric = (up - dn) / (2.0 * h)
            a = float(analytic[name].reshape(-1)[i])
            diff = abs(a - numeric)
            tol = atol + rtol * abs(numeric)
            rel = diff / max(abs(numeric), atol)
            worst_abs = max(worst_abs, diff)
            worst_rel = max(worst_rel, rel)
            checked += 1
            if diff > tol:
                failures.append((name, int(i), a, numeric))

    return GradCheckResult(
        passed=not failures,
        checked=checked,
        worst_abs=worst_abs,
        worst_rel=worst_rel,
        failures=failures,
    )
