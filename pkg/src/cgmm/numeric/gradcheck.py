"""Central finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .tensor import NonFiniteError, Tensor, no_grad


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_err: float
    tol: float
    per_input: dict[str, float] = field(default_factory=dict)
    worst: tuple[str, tuple] | None = None
    n_checked: int = 0
    failure: str | None = None

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        line = f"{status} max_rel_err={self.max_rel_err:.3e} tol={self.tol:.1e} coords={self.n_checked}"
        if self.failure:
            line += f" ({self.failure})"
        return line


def _scalarize(out: Tensor, weights: np.ndarray | None) -> Tensor:
    if out.data.size == 1:
        return out.sum()
    return (out * weights).sum()


def grad_check(
    graph: Callable[[], Tensor],
    inputs: Mapping[str, Tensor] | Sequence[Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
    n_coords: int | None = None,
    rng: np.random.Generator | None = None,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare autodiff gradients of ``graph()`` against central differences.

    ``graph`` is re-evaluated after each in-place perturbation of an input, so
    it must read the inputs' current ``data``. Non-scalar outputs are reduced
    with a fixed random weighting. When ``n_coords`` is given, only that many
    randomly chosen coordinates per input are probed.

    The per-coordinate error is ``|a - n| / max(|a|, |n|, floor)``.
    """
    if not isinstance(inputs, Mapping):
        inputs = {f"input{i}": t for i, t in enumerate(inputs)}
    rng = rng if rng is not None else np.random.default_rng(0)

    try:
        for t in inputs.values():
            t.requires_grad = True
            t.grad = None
        out = graph()
        weights = None if out.data.size == 1 else rng.standard_normal(out.shape)
        _scalarize(out, weights).backward()
    except NonFiniteError as exc:
        return GradCheckReport(False, float("inf"), tol, failure=f"forward/backward: {exc}")

    report = GradCheckReport(True, 0.0, tol)
    for name, t in inputs.items():
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        if n_coords is None or n_coords >= flat.size:
            coords = np.arange(flat.size)
        else:
            coords = rng.choice(flat.size, size=n_coords, replace=False)
        worst = 0.0
        for c in coords:
            orig = flat[c]
            try:
                with no_grad():
                    flat[c] = orig + h
                    fp = _scalarize(graph(), weights).item()
                    flat[c] = orig - h
                    fm = _scalarize(graph(), weights).item()
            except NonFiniteError as exc:
                idx = np.unravel_index(c, t.shape)
                return GradCheckReport(False, float("inf"), tol, report.per_input,
                                       (name, idx), report.n_checked,
                                       failure=f"{name}{list(idx)}: {exc}")
            finally:
                flat[c] = orig
            numeric = (fp - fm) / (2.0 * h)
            a = analytic.reshape(-1)[c]
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            report.n_checked += 1
            if err > worst:
                worst = err
            if err > report.max_rel_err:
                report.max_rel_err = err
                report.worst = (name, tuple(int(i) for i in np.unravel_index(c, t.shape)))
        report.per_input[name] = worst
    report.passed = report.max_rel_err < tol
    if not report.passed:
        report.failure = f"worst at {report.worst[0]}{list(report.worst[1])}"
    return report
