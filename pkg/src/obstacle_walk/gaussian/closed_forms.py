"""Closed-form facts about Gaussian bridges and Brownian excursions.

These serve as oracles for the sampler and the transfer computation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..kernel import make_rng


def alpha_p(p: float) -> float:
    """Height exponent ``(p - 1) / (2p - 1)`` for the obstacle ``1 - |x|^p``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    return (p - 1) / (2 * p - 1)


def tail_exponent_p(p: float) -> float:
    """Stretched-exponential tail exponent ``(2p - 1) / p``."""
    return (2 * p - 1) / p


def bridge_covariance(n: int, beta: float, i: int, j: int) -> float:
    """``Cov(S_i, S_j)`` of a Gaussian bridge pinned at 0 at times 0 and n (``i <= j``)."""
    if not 0 <= i <= j <= n:
        raise ValueError(f"need 0 <= i <= j <= n, got {i}, {j}, {n}")
    return beta * i * (n - j) / n


def _log_q(t: float, x: float) -> float:
    if x <= 0:
        return -math.inf
    return math.log(x) - 0.5 * math.log(2 * math.pi * t**3) - x * x / (2 * t)


def _log_p(t: float, x: float, y: float) -> float:
    if y <= 0 or x <= 0:
        return -math.inf
    return -0.5 * math.log(2 * math.pi * t) - (x - y) ** 2 / (2 * t) + math.log(-math.expm1(-2 * x * y / t))


def log_excursion_density(L: float, times, heights) -> float:
    """Log of the joint density of a Brownian excursion of length ``L`` at ``times``."""
    times = [float(t) for t in times]
    heights = [float(x) for x in heights]
    if len(times) != len(heights) or not times:
        raise ValueError("times and heights must be non-empty and of equal length")
    if not all(a < b for a, b in zip([0.0] + times, times + [L])):
        raise ValueError("need 0 < t_1 < ... < t_m < L")
    if any(x <= 0 for x in heights):
        return -math.inf
    out = math.log(2) + 0.5 * math.log(2 * math.pi * L**3) + _log_q(times[0], heights[0])
    for a, b, xa, xb in zip(times, times[1:], heights, heights[1:]):
        out += _log_p(b - a, xa, xb)
    out += _log_q(L - times[-1], heights[-1])
    return out


def excursion_density(L: float, times, heights) -> float:
    """Joint density of ``(e_{t_1}, ..., e_{t_m})`` for a Brownian excursion of length ``L``."""
    return math.exp(log_excursion_density(L, times, heights))


def excursion_marginal_density(L: float, t: float, x):
    """One-time marginal of the excursion, vectorised in ``x``."""
    x = np.asarray(x, dtype=float)
    c = 2 / math.sqrt(2 * math.pi) * (L / ((L - t) * t)) ** 1.5
    return np.where(x > 0, c * x**2 * np.exp(-(x**2) / (2 * t) - x**2 / (2 * (L - t))), 0.0)


def excursion_tail_bound(n: int, beta: float, k: int, a: float) -> float:
    """Upper bound on ``P(S_k >= a | S_0 = S_n = 0, S >= 0)`` for ``1 <= k <= n/2``."""
    if not 1 <= k <= n / 2:
        raise ValueError("need 1 <= k <= n/2")
    if a <= 0:
        raise ValueError("need a > 0")
    s = math.sqrt(beta * k)
    return 4 / math.sqrt(math.pi) * (a / s + s / a) * math.exp(-(a * a) / (2 * beta * k))


# --------------------------------------------------------------------------
# Holley condition between the walk excursion and the Brownian excursion


def _energy(x: np.ndarray) -> float:
    """``(1/2) sum (x_i - x_{i-1})^2`` with zero boundary values."""
    full = np.concatenate(([0.0], x, [0.0]))
    return 0.5 * float(np.sum(np.diff(full) ** 2))


def _log_walk_density(x: np.ndarray, T: float, log_f) -> float:
    if np.any(x <= 0):
        return -math.inf
    return float(np.sum(log_f(x))) - T * _energy(x)


def _log_reference_density(x: np.ndarray, T: float, log_f) -> float:
    n = x.size + 1
    times = np.arange(1, n)
    return log_excursion_density(n, times, math.sqrt(T) * x) + float(np.sum(log_f(x)))


@dataclass(frozen=True)
class HolleyReport:
    n: int
    trials: int
    min_density_slack: float
    min_bond_slack: float

    @property
    def passed(self) -> bool:
        return self.min_density_slack >= -1e-12 and self.min_bond_slack >= -1e-12


def holley_slacks(x, y, rates, beta: float = 1.0) -> tuple[float, float]:
    """Relative slacks of the density and bond inequalities for one pair ``x, y``.

    The density slack is

        log nu(x v y) + log mu(x ^ y) - log nu(y) - log mu(x)

    where ``mu`` is the Gaussian walk excursion and ``nu`` the Brownian
    excursion reference, both carrying the site factors ``exp(-rates x)``; the
    bond slack is ``H(x) + H(y) - H(x v y) - H(x ^ y)``.  Both are divided by
    the size of the terms involved and are non-negative when the inequalities hold.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    rates = np.asarray(rates, dtype=float)
    T = 1.0 / beta

    def log_f(v):
        return -rates * v

    hi, lo = np.maximum(x, y), np.minimum(x, y)
    lhs = _log_reference_density(hi, T, log_f) + _log_walk_density(lo, T, log_f)
    rhs = _log_reference_density(y, T, log_f) + _log_walk_density(x, T, log_f)
    density = (lhs - rhs) / max(1.0, abs(lhs), abs(rhs))
    e_sum = _energy(x) + _energy(y)
    bond = (e_sum - _energy(hi) - _energy(lo)) / max(1.0, e_sum)
    return density, bond


def holley_check(n: int, seed: int, trials: int, beta: float = 1.0) -> HolleyReport:
    """Randomised check of the Holley inequality between the two excursion laws.

    Draws pairs of positive vectors of dimension ``n - 1`` (every tenth pair
    equal, every tenth ordered) with random site factors and records the
    smallest slacks from :func:`holley_slacks`.
    """
    if n < 2 or n > 12:
        raise ValueError("holley_check evaluates densities directly; use 2 <= n <= 12")
    rng = make_rng(seed, stream=7)
    scale = math.sqrt(beta * n)
    min_density = math.inf
    min_bond = math.inf
    for trial in range(trials):
        rates = rng.exponential(1.0, size=n - 1) / scale
        x = rng.exponential(scale, size=n - 1) + 1e-9
        if trial % 10 == 0:
            y = x.copy()
        elif trial % 10 == 1:
            y = x + rng.exponential(scale, size=n - 1)
        else:
            y = rng.exponential(scale, size=n - 1) + 1e-9
        density, bond = holley_slacks(x, y, rates, beta)
        min_density = min(min_density, density)
        min_bond = min(min_bond, bond)
    return HolleyReport(n=n, trials=trials, min_density_slack=min_density, min_bond_slack=min_bond)
