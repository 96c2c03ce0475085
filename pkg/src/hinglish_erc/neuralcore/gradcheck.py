"""Central-difference gradient checking against backprop."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .layers import Parameter
from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    checked: int
    per_param: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol

    def worst(self) -> str:
        if not self.per_param:
            return "-"
        return max(self.per_param, key=self.per_param.get)


def relative_error(a, b) -> np.ndarray:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(1e-8, np.abs(a) + np.abs(b))


def grad_check(
    f: Callable[[], Tensor],
    params: Iterable[Parameter | tuple[str, Tensor]],
    tol: float = 1e-4,
    step: float = 1e-5,
    max_entries: int | None = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare backprop gradients of the scalar ``f()`` with central differences.

    ``f`` must be deterministic (re-seed any dropout inside it). Parameters
    with more than ``max_entries`` entries are checked on a random subsample.
    """
    named = [(p.name, p.tensor) if isinstance(p, Parameter) else p for p in params]
    if named and named[0][1].data.dtype != np.float64:
        raise ValueError("gradient checks run in 64-bit precision")
    for _, t in named:
        t.grad = None
    f().backward()
    analytic = {name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for name, t in named}
    rng = np.random.default_rng(seed)
    per_param: dict[str, float] = {}
    checked = 0
    for name, t in named:
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            fp = f().item()
            flat[i] = orig - step
            fm = f().item()
            flat[i] = orig
            numeric = (fp - fm) / (2 * step)
            worst = max(worst, float(relative_error(analytic[name].reshape(-1)[i], numeric)))
            checked += 1
        per_param[name] = worst
    for _, t in named:
        t.grad = None
    max_err = max(per_param.values(), default=0.0)
    return GradCheckReport(max_err, tol, checked, per_param)
