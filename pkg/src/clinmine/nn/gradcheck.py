"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

import numpy as np

from .params import Parameter


@dataclass
class GradCheckReport:
    tolerance: float
    errors: dict[str, float] = field(default_factory=dict)
    checked: dict[str, int] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance

    def __str__(self) -> str:
        lines = [f"{name}: max rel err {err:.3e} over {self.checked[name]} entries"
                 for name, err in self.errors.items()]
        lines.append(f"max {self.max_error:.3e} (tolerance {self.tolerance:g}) -> "
                     f"{'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


def relative_error(analytic: float, numeric: float, floor: float = 1e-8) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(
    model_fn: Callable[[Any], float],
    params: Iterable[Parameter],
    inputs: Any,
    tolerance: float = 1e-5,
    step: float = 1e-5,
    max_entries: int | None = None,
    seed: int = 0,
    floor: float = 1e-8,
) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    ``model_fn(inputs)`` must be deterministic (dropout off), return the scalar
    loss, and leave analytic gradients in each ``Parameter.grad`` (it is
    responsible for zeroing them first). With ``max_entries`` a seeded random
    subset of each parameter's entries is checked.
    """
    params = list(params)
    model_fn(inputs)
    analytic = {p.name: p.grad.copy() for p in params}
    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance)
    for p in params:
        flat = p.value.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            up = model_fn(inputs)
            flat[i] = orig - step
            down = model_fn(inputs)
            flat[i] = orig
            numeric = (up - down) / (2.0 * step)
            worst = max(worst, relative_error(analytic[p.name].reshape(-1)[i], numeric, floor))
        report.errors[p.name] = worst
        report.checked[p.name] = len(idx)
    model_fn(inputs)  # restore gradients at the unperturbed point
    return report
