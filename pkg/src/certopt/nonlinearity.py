"""Monotone scalar nonlinearities and their certification parameters.

A nonlinearity is a C^1 map phi with phi(0) = 0 and phi' >= 0 together with
the pair (growth_exponent, growth_bound) = (gamma, M) entering the
certification threshold: for all y1 != y2,

    |dq(phi')| <= M * dq(phi)^gamma,     dq(g) := (g(y2) - g(y1)) / (y2 - y1).

For the odd power family phi(y) = a |y|^(p-2) y with p >= 3 this holds with
gamma = (p-3)/(p-2) and M = (p-2) (p-1)^(1/(p-2)) a^(1/(p-2)).  The
exponential family only supports the sign-based certificate and therefore
carries no (gamma, M).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

__all__ = [
    "Nonlinearity",
    "make_power_law",
    "make_exponential",
    "make_custom",
    "estimate_growth_ratio",
]


@dataclass(frozen=True)
class Nonlinearity:
    kind: str
    coefficient: float
    phi: Callable
    phi_y: Callable
    phi_yy: Callable            # generalized second derivative, used by Newton
    power: Optional[float] = None
    gamma: Optional[float] = None
    growth_bound: Optional[float] = None  # the constant M

    def __call__(self, y):
        return self.phi(y)

    def has_growth_parameters(self) -> bool:
        return self.gamma is not None and self.growth_bound is not None


def evaluate(nl: Nonlinearity, y):
    """Return the pair (phi(y), phi'(y))."""
    return nl.phi(y), nl.phi_y(y)


def make_power_law(a: float, p_exp: float) -> Nonlinearity:
    """Odd power nonlinearity a |y|^(p_exp - 2) y, admissible for p_exp >= 3."""
    if a < 0:
        raise ValueError(f"coefficient a must be nonnegative, got {a}")
    if p_exp < 3:
        raise ValueError(
            f"power-law exponent must satisfy p_exp >= 3, got {p_exp} "
            "(the growth condition is not available below 3)")
    a = float(a)
    p = float(p_exp)

    def phi(y):
        y = np.asarray(y, dtype=float)
        return a * np.abs(y) ** (p - 2) * y

    def phi_y(y):
        y = np.asarray(y, dtype=float)
        return a * (p - 1) * np.abs(y) ** (p - 2)

    def phi_yy(y):
        y = np.asarray(y, dtype=float)
        return a * (p - 1) * (p - 2) * np.abs(y) ** (p - 3) * np.sign(y)

    gamma = (p - 3.0) / (p - 2.0)
    bound = (p - 2.0) * (p - 1.0) ** (1.0 / (p - 2.0)) * a ** (1.0 / (p - 2.0))
    return Nonlinearity(kind="power-law", coefficient=a, power=p,
                        phi=phi, phi_y=phi_y, phi_yy=phi_yy,
                        gamma=gamma, growth_bound=bound)


def make_exponential(a: float) -> Nonlinearity:
    """Exponential nonlinearity exp(a y) - 1.

    Convex on the whole line, so usable with the sign certificate; the
    difference-quotient growth condition fails for every gamma < 1, hence
    gamma and the bound stay unavailable.
    """
    if a < 0:
        raise ValueError(f"coefficient a must be nonnegative, got {a}")
    a = float(a)

    def phi(y):
        return np.expm1(a * np.asarray(y, dtype=float))

    def phi_y(y):
        return a * np.exp(a * np.asarray(y, dtype=float))

    def phi_yy(y):
        return a * a * np.exp(a * np.asarray(y, dtype=float))

    return Nonlinearity(kind="exponential", coefficient=a,
                        phi=phi, phi_y=phi_y, phi_yy=phi_yy)


def make_custom(phi, phi_y, phi_yy, gamma=None, growth_bound=None) -> Nonlinearity:
    """Wrap user-supplied callables; (gamma, M) are never inferred."""
    if (gamma is None) != (growth_bound is None):
        raise ValueError("gamma and growth_bound must be supplied together")
    if gamma is not None and not 0.0 <= gamma < 1.0:
        raise ValueError(f"gamma must lie in [0, 1), got {gamma}")
    if growth_bound is not None and growth_bound < 0:
        raise ValueError(f"growth_bound must be nonnegative, got {growth_bound}")
    return Nonlinearity(kind="custom", coefficient=np.nan,
                        phi=phi, phi_y=phi_y, phi_yy=phi_yy,
                        gamma=gamma, growth_bound=growth_bound)


def estimate_growth_ratio(nl: Nonlinearity, low: float = -10.0, high: float = 10.0,
                          count: int = 10**5, seed: int = 0) -> float:
    """Largest sampled difference-quotient ratio |dq(phi')| / dq(phi)^gamma.

    Samples random pairs y1 != y2 in [low, high]; the result should stay
    below the stored bound M for a valid (gamma, M) pair.  Deterministic for
    a fixed seed.
    """
    if not nl.has_growth_parameters():
        raise ValueError("growth parameters (gamma, M) unavailable for this nonlinearity")
    if not (np.isfinite(low) and np.isfinite(high) and low < high):
        raise ValueError(f"sample range must be finite with low < high, got ({low}, {high})")
    rng = np.random.default_rng(seed)
    best = 0.0
    chunk = 250_000
    remaining = int(count)
    while remaining > 0:
        k = min(chunk, remaining)
        remaining -= k
        y1 = rng.uniform(low, high, k)
        y2 = rng.uniform(low, high, k)
        keep = y1 != y2
        y1, y2 = y1[keep], y2[keep]
        dy = y2 - y1
        num = np.abs((nl.phi_y(y2) - nl.phi_y(y1)) / dy)
        den = (nl.phi(y2) - nl.phi(y1)) / dy
        den = np.maximum(den, 0.0) ** nl.gamma
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(num == 0.0, 0.0, num / den)
        best = max(best, float(np.max(ratio, initial=0.0)))
    return best
