"""Discretised concave obstacles and the tilt schedule they induce.

For an obstacle ``h`` on ``[0, 1]`` and a size ``n`` the walk must stay above
``hn[k] = n h(k/n)``.  Tilting the k-th step so that its mean equals the local
increment ``delta_k = hn[k] - hn[k-1]`` removes the large-deviation cost and
leaves a recentred walk ``Z = S - hn`` that feels a linear potential
``(alpha_k / n) Z_k`` with ``alpha_k = n (gamma_k - gamma_{k+1})``.

Sequences indexed by time keep the time index as the array index; entries
with no meaning (``delta[0]``, ``gamma[0]``, ``alpha[0]``, ``alpha[n]``) are NaN.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import SlopeError
from .step_law import SLOPE_MARGIN, StepLaw, cumulant_derivatives, invert_mean, rate_function

_SNAP = 1e-9


def ceil_height(x):
    """Ceiling that ignores floating noise just above an integer."""
    x = np.asarray(x, dtype=float)
    r = np.round(x)
    snapped = np.where(np.abs(x - r) <= _SNAP * np.maximum(1.0, np.abs(x)), r, np.ceil(x))
    out = snapped.astype(np.int64)
    return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ObstacleSpec:
    """A named obstacle family with ``h``, ``h'`` and ``h''`` on its domain."""

    family: str
    param: float
    h: Callable
    dh: Callable
    d2h: Callable
    exact_hn: Callable[[int], np.ndarray] | None = None

    def __repr__(self) -> str:
        return f"ObstacleSpec({self.family}({self.param:g}))"


def quadratic(c: float) -> ObstacleSpec:
    """``h(x) = c x (1 - x)``; slopes in ``[-c, c]`` and curvature ``-2c``."""
    if c <= 0:
        raise ValueError("quadratic obstacle needs c > 0")

    def exact_hn(n: int) -> np.ndarray:
        k = np.arange(n + 1, dtype=float)
        return c * k * (n - k) / n

    return ObstacleSpec(
        family="quadratic",
        param=c,
        h=lambda x: c * x * (1 - x),
        dh=lambda x: c * (1 - 2 * x),
        d2h=lambda x: -2 * c * np.ones_like(np.asarray(x, dtype=float)),
        exact_hn=exact_hn,
    )


#: fraction of the sine arch used by :func:`cosine`, keeps h'' bounded away from 0
COSINE_SCALING = 0.8


def cosine(c: float, scaling: float = COSINE_SCALING) -> ObstacleSpec:
    """Central piece of a sine arch: ``h'(x) = c cos(pi (a + s x))`` with ``a = (1 - s) / 2``.

    ``h(0) = h(1) = 0`` and ``h'' <= -c pi s sin(pi a) < 0`` on ``[0, 1]``.
    """
    if c <= 0 or not 0 < scaling < 1:
        raise ValueError("cosine obstacle needs c > 0 and 0 < scaling < 1")
    a = (1 - scaling) / 2

    def h(x):
        return c / (math.pi * scaling) * (np.sin(math.pi * (a + scaling * np.asarray(x))) - math.sin(math.pi * a))

    return ObstacleSpec(
        family="cosine",
        param=c,
        h=h,
        dh=lambda x: c * np.cos(math.pi * (a + scaling * np.asarray(x))),
        d2h=lambda x: -c * math.pi * scaling * np.sin(math.pi * (a + scaling * np.asarray(x))),
    )


def p_obstacle(p: float) -> ObstacleSpec:
    """``h(x) = 1 - |x|^p`` on ``[-1, 1]``; only meaningful for the Gaussian lab."""
    if p < 1:
        raise ValueError("p obstacle needs p >= 1")

    def d2h(x):
        x = np.abs(np.asarray(x, dtype=float))
        with np.errstate(divide="ignore"):
            return -p * (p - 1) * x ** (p - 2)

    return ObstacleSpec(
        family="p",
        param=p,
        h=lambda x: 1 - np.abs(np.asarray(x, dtype=float)) ** p,
        dh=lambda x: -p * np.sign(x) * np.abs(np.asarray(x, dtype=float)) ** (p - 1),
        d2h=d2h,
    )


def tabulated(h: Callable, dh: Callable, d2h: Callable, name: str = "tabulated") -> ObstacleSpec:
    return ObstacleSpec(family=name, param=math.nan, h=h, dh=dh, d2h=d2h)


OBSTACLE_FAMILIES = {"quadratic": quadratic, "cosine": cosine, "p": p_obstacle}


def obstacle_from_name(family: str, param: float) -> ObstacleSpec:
    try:
        factory = OBSTACLE_FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown obstacle family {family!r}; known: {', '.join(OBSTACLE_FAMILIES)}") from None
    return factory(param)


@dataclass(frozen=True)
class ObstacleProfile:
    n: int
    hn: np.ndarray
    delta: np.ndarray
    zn: float
    spec: ObstacleSpec

    @property
    def floor(self) -> np.ndarray:
        """Lowest admissible integer height at each time."""
        return ceil_height(self.hn)


@dataclass(frozen=True)
class TiltSchedule:
    gamma: np.ndarray
    alpha: np.ndarray
    ld_exponent_sum: float
    ld_exponent_integral: float
    alpha_bounds: tuple[float, float]

    @property
    def n(self) -> int:
        return len(self.gamma) - 1


def discretize(spec: ObstacleSpec, n: int) -> ObstacleProfile:
    """Sample the obstacle at integer times: ``hn[k] = n h(k/n)`` for ``k = 0..n``."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if spec.family == "p":
        raise ValueError("the p obstacle lives on [-n, n]; use gaussian.build_p_obstacles")
    if spec.exact_hn is not None:
        hn = np.asarray(spec.exact_hn(n), dtype=float)
    else:
        hn = n * np.asarray(spec.h(np.arange(n + 1) / n), dtype=float)
    delta = np.empty(n + 1)
    delta[0] = math.nan
    delta[1:] = np.diff(hn)
    zn = float(ceil_height(hn[n]) - hn[n])
    if abs(zn) <= _SNAP:
        zn = 0.0
    for arr in (hn, delta):
        arr.setflags(write=False)
    return ObstacleProfile(n=n, hn=hn, delta=delta, zn=zn, spec=spec)


def tilt_schedule(
    law: StepLaw, profile: ObstacleProfile, quad_tol: float = 1e-10, margin: float = SLOPE_MARGIN
) -> TiltSchedule:
    """Per-step tilts ``gamma_k`` with ``H'(gamma_k) = delta_k`` and the potential ``alpha_k``.

    ``margin`` keeps every tilt that far inside the domain of the cumulant.
    """
    n = profile.n
    gamma = np.full(n + 1, math.nan)
    for k in range(1, n + 1):
        try:
            gamma[k] = invert_mean(law, profile.delta[k], margin)
        except SlopeError as exc:
            raise SlopeError(f"step k={k}: increment {profile.delta[k]:.6g} not admissible ({exc})") from None
    alpha = np.full(n + 1, math.nan)
    alpha[1:n] = n * (gamma[1:n] - gamma[2 : n + 1])
    ld_sum = float(np.sum(rate_function(law, profile.delta[1:])))
    ld_int = n * ld_integral(law, profile.spec, quad_tol)
    inner = alpha[1:n]
    for arr in (gamma, alpha):
        arr.setflags(write=False)
    return TiltSchedule(
        gamma=gamma,
        alpha=alpha,
        ld_exponent_sum=ld_sum,
        ld_exponent_integral=ld_int,
        alpha_bounds=(float(inner.min()), float(inner.max())),
    )


def ld_integral(law: StepLaw, spec: ObstacleSpec, tol: float = 1e-10) -> float:
    """``int_0^1 I(h'(s)) ds`` by adaptive quadrature."""
    value, _ = integrate.quad(
        lambda s: float(rate_function(law, float(spec.dh(s)))), 0.0, 1.0, epsabs=tol, epsrel=tol, limit=200
    )
    return value


def limiting_alpha(law: StepLaw, spec: ObstacleSpec, x) -> np.ndarray:
    """Large-n limit of the potential: ``-h''(x) / H''((H')^{-1}(h'(x)))``."""
    x = np.asarray(x, dtype=float)
    gam = np.asarray(invert_mean(law, np.asarray(spec.dh(x), dtype=float)))
    _, d2 = cumulant_derivatives(law, gam)
    return -np.asarray(spec.d2h(x)) / np.asarray(d2)
