"""Finite-difference verification of reverse-mode gradients.

``check_gradients`` takes a closure that rebuilds a scalar loss from a
ParamStore, runs one backward pass, then perturbs a sample of
coordinates in each parameter by +/-h and compares the central
difference against the recorded analytic gradient.  The relative error
uses max(|analytic|, |numeric|, floor) in the denominator so that
near-zero coordinates are judged on absolute terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autograd import Tensor
from .errors import ContractError
from .optim import ParamStore

STEP = 1e-5
TOLERANCE = 1e-4
MAX_COORDS = 64
ERROR_FLOOR = 1e-6


@dataclass
class CoordReport:
    """Comparison at one sampled coordinate of one parameter."""

    name: str
    index: tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    """Outcome of one finite-difference sweep.

    ``passed`` is true exactly when every per-parameter max relative
    error is at or below ``tolerance``.
    """

    passed: bool
    per_param: dict[str, float]
    checked_coords: int
    tolerance: float
    worst: CoordReport | None = None
    failures: list[CoordReport] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max(self.per_param.values(), default=0.0)

    def summary(self) -> str:
        state = "PASS" if self.passed else "FAIL"
        worst = ""
        if self.worst is not None:
            worst = (
                f" worst={self.worst.name}{list(self.worst.index)}"
                f" analytic={self.worst.analytic:.3e}"
                f" numeric={self.worst.numeric:.3e}"
            )
        return (
            f"gradcheck {state}: {self.checked_coords} coords,"
            f" max rel err {self.max_rel_error:.3e}"
            f" (tol {self.tolerance:.1e}){worst}"
        )

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tolerance": self.tolerance,
            "checked_coords": self.checked_coords,
            "max_rel_error": self.max_rel_error,
            "per_param": dict(self.per_param),
        }


def _sample_indices(shape: tuple[int, ...], rng: np.random.Generator) -> list[tuple[int, ...]]:
    total = int(np.prod(shape, dtype=np.int64)) if shape else 1
    if total <= MAX_COORDS:
        flat = np.arange(total)
    else:
        flat = rng.choice(total, size=MAX_COORDS, replace=False)
    return [tuple(int(i) for i in np.unravel_index(f, shape)) for f in np.sort(flat)]


def check_gradients(
    loss_fn: Callable[[ParamStore], Tensor],
    store: ParamStore,
    tolerance: float = TOLERANCE,
    step: float = STEP,
    seed: int = 0,
) -> GradCheckReport:
    """Compare analytic gradients of loss_fn against central differences.

    loss_fn must be a pure function of the store contents: it is invoked
    repeatedly with individual coordinates nudged by +/-step, so any
    internal randomness must be fixed.  Tensors over 64 elements are
    checked at 64 sampled coordinates; smaller ones in full.
    """
    store.zero_grad()
    try:
        loss = loss_fn(store)
    except ValueError as exc:
        raise ContractError(f"gradient check aborted: {exc}") from exc
    loss.backward()
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data))
        for name, t in store.params.items()
    }

    rng = np.random.default_rng(seed)
    reports: list[CoordReport] = []
    per_param: dict[str, float] = {}
    for name in store.names():
        base = store.params[name].data.copy()
        worst_here = 0.0
        for index in _sample_indices(base.shape, rng):
            bumped = base.copy()
            bumped[index] = base[index] + step
            store.params[name] = Tensor(bumped, requires_grad=True)
            f_plus = loss_fn(store).item()
            bumped[index] = base[index] - step
            store.params[name] = Tensor(bumped, requires_grad=True)
            f_minus = loss_fn(store).item()
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = float(analytic[name][index])
            rel = abs(a - numeric) / max(abs(a), abs(numeric), ERROR_FLOOR)
            reports.append(CoordReport(name, index, a, numeric, rel))
            worst_here = max(worst_here, rel)
        per_param[name] = worst_here
        store.params[name] = Tensor(base, requires_grad=True)
    store.zero_grad()

    worst = max(reports, key=lambda r: r.rel_error, default=None)
    failures = [r for r in reports if r.rel_error > tolerance]
    return GradCheckReport(
        passed=not failures,
        per_param=per_param,
        checked_coords=len(reports),
        tolerance=tolerance,
        worst=worst,
        failures=failures,
    )
