"""Transfer-operator evaluation of one-site marginals of the Gaussian chain.

With ``psi = phi - g`` the obstacle becomes a wall at 0 and the Gaussian
energy picks up the linear term ``T sum_k c_k psi_k``, where ``c_k`` is the
discrete curvature of ``g``.  The chain is then a Gaussian walk on ``[0, inf)``
with a site potential, which is integrated site by site on a midpoint grid of
spacing ``dx``.  The midpoint rule makes the error O(dx^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import MassLossError
from .gibbs import GaussianField
from .obstacles import discrete_curvature


@dataclass(frozen=True)
class SiteMarginal:
    """Discretised law of ``phi`` at one site: grid points and their probabilities."""

    site: int
    heights: np.ndarray
    probs: np.ndarray
    mass_loss: float
    dx: float

    def mean(self) -> float:
        return float(np.dot(self.probs, self.heights))

    def variance(self) -> float:
        m = self.mean()
        return float(np.dot(self.probs, (self.heights - m) ** 2))

    def moment(self, r: int, shift: float = 0.0) -> float:
        return float(np.dot(self.probs, (self.heights - shift) ** r))

    def tail(self, level: float) -> float:
        """``P(phi >= level)`` where each grid cell counts from its midpoint."""
        return float(self.probs[self.heights >= level].sum())


def gaussian_kernel(beta: float, dx: float, width_sd: float = 10.0) -> np.ndarray:
    reach = int(math.ceil(width_sd * math.sqrt(beta) / dx))
    t = np.arange(-reach, reach + 1) * dx
    return dx * np.exp(-(t**2) / (2 * beta)) / math.sqrt(2 * math.pi * beta)


def transfer_marginal(
    fld: GaussianField,
    site: int = 0,
    dx: float = 0.1,
    height_cap: float | None = None,
    mass_tol: float = 1e-10,
) -> SiteMarginal:
    """Law of ``phi_site`` under the chain conditioned on ``phi >= g``.

    Needs a finite obstacle whose end values coincide with the boundary values.
    ``height_cap`` bounds ``psi`` (default ``12 sqrt(beta) n^(1/2)``); the share
    of weight in the top grid cell is reported as ``mass_loss``.
    """
    g = fld.obstacle
    if not np.all(np.isfinite(g)):
        raise ValueError("transfer evaluation needs a finite obstacle")
    if abs(fld.boundary[0] - g[0]) > 1e-12 or abs(fld.boundary[1] - g[-1]) > 1e-12:
        raise ValueError("transfer evaluation needs boundary values on the obstacle")
    n = fld.n
    if not -n < site < n:
        raise ValueError("site must be interior")
    beta, T = fld.beta, fld.T
    if height_cap is None:
        height_cap = 12 * math.sqrt(beta) * math.sqrt(n)
    M = int(math.ceil(height_cap / dx))
    x = (np.arange(M) + 0.5) * dx
    ker = gaussian_kernel(beta, dx)
    reach = (ker.size - 1) // 2
    # curvature at interior sites -n+1..n-1, index k + n - 1
    curv = discrete_curvature(g)
    first = np.exp(-(x**2) / (2 * beta)) / math.sqrt(2 * math.pi * beta)

    def propagate(vec):
        return np.convolve(vec, ker)[reach : reach + M]

    # forward: from -n+1 up to site, potential included
    f = first * np.exp(-T * curv[0] * x)
    f /= f.max()
    for k in range(-n + 2, site + 1):
        f = propagate(f) * np.exp(-T * curv[k + n - 1] * x)
        f /= f.max()
    # backward: from n-1 down to site, potential excluded at site
    b = first.copy()
    b /= b.max()
    for k in range(n - 2, site - 1, -1):
        b = propagate(b * np.exp(-T * curv[k + 1 + n - 1] * x))
        b /= b.max()
    probs = f * b
    probs /= probs.sum()
    mass_loss = float(probs[-1])
    if mass_loss > mass_tol:
        raise MassLossError(f"top grid cell carries {mass_loss:.3e} of the mass (tol {mass_tol:.1e})")
    return SiteMarginal(site=site, heights=g[site + n] + x, probs=probs, mass_loss=max(mass_loss, 0.0), dx=dx)
