"""Problem instances: tracking target, control box, optional state box.

The optimization reads

    min  1/2 |y - y0|_L2^2 + alpha/2 |u|_L2^2
    s.t. -Laplace(y) + phi(y) = u  on the unit square, y = 0 on the boundary,
         lower_control <= u <= upper_control,
         state_lower(x) <= y(x) <= state_upper(x)   (optional, on all of Omega)

with the two benchmark targets: a reachable trigonometric one and an
unreachable quadratic one that is incompatible with the boundary condition.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .nonlinearity import Nonlinearity

__all__ = [
    "StateBounds",
    "ProblemSpec",
    "target_reachable",
    "target_unreachable",
    "SCENARIOS",
    "make_case_spec",
]


def target_reachable(x):
    """Scenario A1: 2 sin(2 pi x1) sin(2 pi x2); vanishes on the boundary."""
    x = np.asarray(x, dtype=float)
    return 2.0 * np.sin(2.0 * np.pi * x[..., 0]) * np.sin(2.0 * np.pi * x[..., 1])


def target_unreachable(x):
    """Scenario A2: 60 + 160 (x1 (x1 - 1) + x2 (x2 - 1)); equals 60 at corners."""
    x = np.asarray(x, dtype=float)
    x1, x2 = x[..., 0], x[..., 1]
    return 60.0 + 160.0 * (x1 * (x1 - 1.0) + x2 * (x2 - 1.0))


SCENARIOS = {"A1": target_reachable, "A2": target_unreachable}


@dataclass(frozen=True)
class StateBounds:
    """Pointwise state box on the closed domain; callables of x with shape (..., 2)."""
    lower: Callable
    upper: Callable


@dataclass(frozen=True)
class ProblemSpec:
    """Full instance description; immutable and safe to share between solves."""

    n: int
    nonlinearity: Nonlinearity
    alpha: float
    desired_state: Callable
    scenario: str = "custom"
    control_lower: float = -np.inf
    control_upper: float = np.inf
    state_bounds: Optional[StateBounds] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"mesh resolution n must be positive, got {self.n}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.control_lower <= self.control_upper:
            raise ValueError(
                f"control bounds must satisfy lower <= upper, got "
                f"({self.control_lower}, {self.control_upper})")

    @property
    def control_constrained(self) -> bool:
        return np.isfinite(self.control_lower) or np.isfinite(self.control_upper)

    @property
    def state_constrained(self) -> bool:
        return self.state_bounds is not None


def make_case_spec(case: int, scenario: str, alpha: float, nl: Nonlinearity,
                   n: int = 32, control_bound: float = 5.0,
                   state_bound: float = 1.0,
                   desired_state: Callable | None = None) -> ProblemSpec:
    """Build one of the three benchmark constraint cases.

    Case 1 is unconstrained, case 2 boxes the control at +-control_bound,
    case 3 boxes the state at +-state_bound on the whole domain.  The
    scenario picks the target ("A1", "A2", or "custom" together with an
    explicit callable).
    """
    if case not in (1, 2, 3):
        raise ValueError(f"case must be 1, 2 or 3, got {case}")
    if scenario in SCENARIOS:
        y0 = SCENARIOS[scenario]
    elif scenario == "custom":
        if desired_state is None:
            raise ValueError("scenario 'custom' requires an explicit desired_state")
        y0 = desired_state
    else:
        raise ValueError(f"unknown scenario {scenario!r}; expected A1, A2 or custom")

    lower, upper = -np.inf, np.inf
    bounds = None
    if case == 2:
        lower, upper = -float(control_bound), float(control_bound)
    elif case == 3:
        sb = float(state_bound)
        bounds = StateBounds(lower=lambda x, s=sb: np.full(np.asarray(x).shape[:-1], -s),
                             upper=lambda x, s=sb: np.full(np.asarray(x).shape[:-1], s))
    return ProblemSpec(n=n, nonlinearity=nl, alpha=float(alpha), desired_state=y0,
                       scenario=scenario, control_lower=lower, control_upper=upper,
                       state_bounds=bounds)
