"""The ``1 - |x|^p`` obstacle on ``{-n, ..., n}`` and its lower/upper modifications."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DegenerateError


def p_profile(p: float, n: int) -> np.ndarray:
    """``hn(k) = n - |k|^p / n^(p-1)`` for ``k = -n..n`` (array index ``k + n``)."""
    if p < 1:
        raise ValueError("p must be >= 1")
    k = np.abs(np.arange(-n, n + 1, dtype=float))
    return n - k**p / float(n) ** (p - 1)


def hull_slope(p: float, n: int, L: float) -> float:
    """Slope of the linear pieces of the raised obstacle."""
    if p == 1:
        return 1.0
    return p**p * L ** (p - 1) / ((p - 1) ** (p - 1) * float(n) ** (p - 1))


def discrete_curvature(g: np.ndarray) -> np.ndarray:
    """``2 g(i) - g(i-1) - g(i+1)`` at interior points; non-negative for concave ``g``."""
    return 2 * g[1:-1] - g[:-2] - g[2:]


@dataclass(frozen=True)
class PObstacles:
    p: float
    n: int
    L: int
    h: np.ndarray
    h_minus: np.ndarray
    h_plus: np.ndarray
    #: curvature of ``h_plus`` at interior sites ``-n+1..n-1``
    gamma: np.ndarray

    @property
    def sites(self) -> np.ndarray:
        return np.arange(-self.n, self.n + 1)

    def gamma_at(self, i: int) -> float:
        return float(self.gamma[i + self.n - 1])


def build_p_obstacles(p: float, n: int, L: int) -> PObstacles:
    """Return ``hn``, its plateau-truncated lower version and its concave raised version.

    ``h_minus`` is flat at ``hn(L)`` on ``|k| <= L``; ``h_plus`` is flat at ``n`` on
    ``|k| <= L``, then linear until it meets ``hn`` at ``|k| = pL/(p-1)``.
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    if n < 1 or L < 0 or L > n:
        raise ValueError("need n >= 1 and 0 <= L <= n")
    if p == 1 and L > 0:
        raise DegenerateError("for p = 1 the raised obstacle forces L = 0")
    if p > 1 and L > (p - 1) / p * n + 1e-12:
        raise DegenerateError(f"L = {L} exceeds (p-1)/p * n = {(p - 1) / p * n:g}")
    h = p_profile(p, n)
    k = np.abs(np.arange(-n, n + 1, dtype=float))

    h_minus = np.where(k <= L, h[n + L], h)

    h_plus = h.copy()
    if p > 1:
        slope = hull_slope(p, n, L)
        reach = p * L / (p - 1)
        mid = (k > L) & (k <= reach)
        h_plus[mid] = n - slope * (k[mid] - L)
        h_plus[k <= L] = n
    gamma = discrete_curvature(h_plus)

    tol = 1e-9 * n
    if np.any(h_minus > h + tol) or np.any(h > h_plus + tol):
        raise AssertionError("obstacle ordering h_minus <= h <= h_plus violated")
    if np.any(gamma < -tol):
        raise AssertionError("raised obstacle is not concave")
    for arr in (h, h_minus, h_plus, gamma):
        arr.setflags(write=False)
    return PObstacles(p=p, n=n, L=int(L), h=h, h_minus=h_minus, h_plus=h_plus, gamma=gamma)


def default_plateau(p: float, n: int) -> int:
    """A plateau half-width on the natural scale ``n^(2 alpha_p)``, clipped to the allowed range."""
    if p == 1:
        return 0
    a = (p - 1) / (2 * p - 1)
    return int(min(math.floor((p - 1) / p * n), max(1, round(float(n) ** (2 * a)))))
