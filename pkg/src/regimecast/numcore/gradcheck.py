"""Central finite-difference checking of tape gradients.

A check entry passes when |analytic - numeric| <= atol + rtol*max(|a|,|n|)
for every probed element; the reported score folds both tolerances into one
ratio so a tensor passes iff its max_rel_error <= rtol.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tape, Tensor, backward


@dataclass
class GradCheckEntry:
    name: str
    max_rel_error: float
    n_checked: int
    passed: bool


@dataclass
class GradCheckReport:
    rtol: float
    atol: float
    entries: list[GradCheckEntry] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def worst(self) -> float:
        return max((e.max_rel_error for e in self.entries), default=0.0)

    def summary(self) -> str:
        lines = []
        for e in self.entries:
            status = "ok  " if e.passed else "FAIL"
            lines.append(
                f"{status} {e.name:<40s} max_rel={e.max_rel_error:.3e} "
                f"(checked {e.n_checked})")
        return "\n".join(lines)


def finite_difference_check(loss_fn, params: dict[str, Tensor],
                            h: float = 1e-5, rtol: float = 1e-4,
                            atol: float = 1e-6, max_elements: int | None = None,
                            rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare tape gradients of a scalar `loss_fn()` against central differences.

    `loss_fn` must be deterministic (freeze or disable dropout).  When a
    parameter has more elements than `max_elements`, a seeded subset is probed.
    """
    with Tape() as tape:
        loss = loss_fn()
    if loss.size != 1:
        raise ValueError("loss_fn must return a scalar tensor")
    grads = backward(tape, loss, params=params.values())

    report = GradCheckReport(rtol=rtol, atol=atol)
    shift = atol / rtol
    for name, p in params.items():
        analytic = grads[p]
        n = p.data.size
        if max_elements is not None and n > max_elements:
            if rng is None:
                rng = np.random.default_rng(0)
            flat_idx = rng.choice(n, size=max_elements, replace=False)
        else:
            flat_idx = np.arange(n)
        flat = p.data.reshape(-1)
        max_err = 0.0
        for idx in flat_idx:
            orig = flat[idx]
            flat[idx] = orig + h
            up = float(loss_fn().data)
            flat[idx] = orig - h
            down = float(loss_fn().data)
            flat[idx] = orig
            numeric = (up - down) / (2.0 * h)
            a = float(analytic.reshape(-1)[idx])
            err = abs(a - numeric) / (max(abs(a), abs(numeric)) + shift)
            if err > max_err:
                max_err = err
        report.entries.append(GradCheckEntry(
            name=name, max_rel_error=max_err, n_checked=len(flat_idx),
            passed=max_err <= rtol))
    return report
