"""Centred step distributions and their cumulant toolkit.

A :class:`StepLaw` is either a lattice law (a finite probability table on the
integers) or a Gaussian law.  For both kinds the module provides the cumulant
generating function ``H(t) = log E exp(tX)``, its first two derivatives, the
inverse of ``H'``, the Legendre transform ``I`` and exponential tilting.

All lattice sums are evaluated with max-shifted exponentials, so ``t * x`` may
be large without overflow.  Every function accepts a scalar or an array for
its real argument and returns the same shape.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .errors import DomainError, SlopeError

LATTICE = "lattice"
GAUSSIAN = "gaussian"

#: total probability allowed outside the truncation window of an unbounded law
TRUNCATION_MASS = 1e-14
#: default distance kept between a tilt and the edge of the cumulant domain
SLOPE_MARGIN = 1e-6

_NEWTON_MAX_ITER = 100
_BISECT_MAX_ITER = 400


@dataclass(frozen=True)
class StepLaw:
    """Immutable description of a step distribution.

    ``offsets``/``probs`` describe the probability table of a lattice law and
    are empty for a Gaussian law.  ``domain_bounds`` is the open interval on
    which the cumulant of the *untruncated* law is finite.
    """

    kind: str
    name: str
    sigma2: float
    mean: float = 0.0
    offsets: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    probs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    domain_bounds: tuple[float, float] = (-math.inf, math.inf)
    truncation_radius: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in (LATTICE, GAUSSIAN):
            raise ValueError(f"unknown step law kind {self.kind!r}")
        if self.sigma2 <= 0:
            raise ValueError("variance must be positive")
        a, b = self.domain_bounds
        if not a < 0 < b:
            raise ValueError("cumulant domain must contain 0 in its interior")
        if self.kind == LATTICE:
            self.offsets.setflags(write=False)
            self.probs.setflags(write=False)

    @property
    def is_lattice(self) -> bool:
        return self.kind == LATTICE

    @property
    def support(self) -> list[tuple[int, float]]:
        return [(int(x), float(p)) for x, p in zip(self.offsets, self.probs)]

    @property
    def log_probs(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.probs)

    def slope_range(self) -> tuple[float, float]:
        """Open interval of means reachable by tilting (the closure is excluded)."""
        if self.kind == GAUSSIAN:
            return (-math.inf, math.inf)
        a, b = self.domain_bounds
        lo = float(self.offsets.min()) if math.isinf(a) else -math.inf
        hi = float(self.offsets.max()) if math.isinf(b) else math.inf
        return (lo, hi)

    def __repr__(self) -> str:
        return f"StepLaw({self.name})"

    # numpy arrays break the generated __eq__/__hash__
    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StepLaw):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.sigma2 == other.sigma2
            and self.mean == other.mean
            and self.domain_bounds == other.domain_bounds
            and np.array_equal(self.offsets, other.offsets)
            and np.array_equal(self.probs, other.probs)
        )

    def __hash__(self) -> int:
        return hash((self.kind, self.name, self.sigma2, self.mean, self.domain_bounds))


# --------------------------------------------------------------------------
# constructors


def lattice_law(
    offsets,
    probs,
    name: str = "lattice",
    domain_bounds: tuple[float, float] = (-math.inf, math.inf),
    truncation_radius: int | None = None,
    require_centred: bool = True,
) -> StepLaw:
    """Build and validate a lattice law from a probability table."""
    offsets = np.asarray(offsets, dtype=np.int64)
    probs = np.asarray(probs, dtype=float)
    if offsets.ndim != 1 or offsets.shape != probs.shape or offsets.size == 0:
        raise ValueError("offsets and probs must be matching non-empty 1-d arrays")
    if np.any(probs < 0) or np.any(probs > 1):
        raise ValueError("probabilities must lie in [0, 1]")
    keep = probs > 0
    offsets, probs = offsets[keep], probs[keep]
    order = np.argsort(offsets)
    offsets, probs = offsets[order], probs[order]
    if len(np.unique(offsets)) != offsets.size:
        raise ValueError("duplicate offsets in support")
    if abs(probs.sum() - 1.0) > 1e-12:
        raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
    mean = float(np.dot(offsets, probs))
    if require_centred and abs(mean) > 1e-12:
        raise ValueError(f"step law is not centred (mean {mean!r})")
    diffs = np.diff(offsets)
    if offsets.size < 2 or reduce(math.gcd, diffs.tolist()) != 1:
        raise ValueError("support must be irreducible and aperiodic (gcd of differences 1)")
    sigma2 = float(np.dot((offsets - mean) ** 2, probs))
    return StepLaw(
        kind=LATTICE,
        name=name,
        sigma2=sigma2,
        mean=mean,
        offsets=offsets,
        probs=probs,
        domain_bounds=domain_bounds,
        truncation_radius=truncation_radius,
    )


def uniform3() -> StepLaw:
    """Uniform law on {-1, 0, 1}."""
    return lattice_law([-1, 0, 1], [1 / 3, 1 / 3, 1 / 3], name="uniform3")


def lazy_srw(q: float) -> StepLaw:
    """Lazy simple random walk: stay put with probability ``q``, else step +-1."""
    if not 0 < q < 1:
        raise ValueError("lazy_srw needs 0 < q < 1")
    return lattice_law([-1, 0, 1], [(1 - q) / 2, q, (1 - q) / 2], name=f"lazy_srw({q:g})")


def centered_binomial(m: int) -> StepLaw:
    """Binomial(m, 1/2) shifted by -m/2; ``m`` must be even to stay on the integers."""
    if m < 2 or m % 2:
        raise ValueError("centered_binomial needs an even m >= 2")
    k = np.arange(m + 1)
    probs = np.array([math.comb(m, int(i)) for i in k], dtype=float) / 2.0**m
    return lattice_law(k - m // 2, probs, name=f"centered_binomial({m})")


def two_sided_geometric(r: float) -> StepLaw:
    """P(X = x) proportional to r^|x|, truncated where the tail mass drops below 1e-14."""
    if not 0 < r < 1:
        raise ValueError("two_sided_geometric needs 0 < r < 1")
    c = (1 - r) / (1 + r)
    # tail beyond radius R: 2 c r^(R+1) / (1 - r)
    radius = max(1, math.ceil(math.log(TRUNCATION_MASS * (1 - r) / (2 * c)) / math.log(r) - 1))
    x = np.arange(-radius, radius + 1)
    probs = c * r ** np.abs(x)
    probs /= probs.sum()
    # symmetric table, remove rounding drift in the mean
    probs = 0.5 * (probs + probs[::-1])
    log_r = math.log(r)
    return lattice_law(
        x,
        probs,
        name=f"two_sided_geometric({r:g})",
        domain_bounds=(log_r, -log_r),
        truncation_radius=radius,
    )


def gaussian(beta: float) -> StepLaw:
    """Centred Gaussian law with variance ``beta``."""
    if beta <= 0:
        raise ValueError("gaussian needs beta > 0")
    return StepLaw(kind=GAUSSIAN, name=f"gaussian({beta:g})", sigma2=float(beta))


LAW_FACTORIES = {
    "uniform3": uniform3,
    "lazy_srw": lazy_srw,
    "centered_binomial": centered_binomial,
    "two_sided_geometric": two_sided_geometric,
    "gaussian": gaussian,
}

_LAW_RE = re.compile(r"^\s*([a-z_0-9]+)\s*(?:\(\s*([^()]*?)\s*\))?\s*$")


def law_from_name(text: str) -> StepLaw:
    """Parse ``uniform3``, ``lazy_srw(0.5)``, ``centered_binomial(2)`` and so on."""
    match = _LAW_RE.match(text)
    if not match or match.group(1) not in LAW_FACTORIES:
        raise ValueError(f"unknown step law {text!r}; known: {', '.join(LAW_FACTORIES)}")
    name, arg = match.groups()
    factory = LAW_FACTORIES[name]
    if name == "uniform3":
        if arg:
            raise ValueError("uniform3 takes no parameter")
        return factory()
    if not arg:
        raise ValueError(f"{name} needs a parameter")
    value = int(arg) if name == "centered_binomial" else float(arg)
    return factory(value)


# --------------------------------------------------------------------------
# cumulant toolkit


def _check_domain(law: StepLaw, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    a, b = law.domain_bounds
    if np.any(~np.isfinite(t)) or np.any(t <= a) or np.any(t >= b):
        raise DomainError(f"t outside the cumulant domain ({a}, {b})")
    return t


def _lattice_tilted_moments(law: StepLaw, t: np.ndarray):
    """Return (H, H', H'') of a lattice law at the points ``t`` (any shape)."""
    x = law.offsets.astype(float)
    expo = t[..., None] * x + law.log_probs
    shift = expo.max(axis=-1, keepdims=True)
    w = np.exp(expo - shift)
    total = w.sum(axis=-1)
    h = np.log(total) + shift[..., 0]
    p = w / total[..., None]
    m1 = (p * x).sum(axis=-1)
    m2 = (p * (x - m1[..., None]) ** 2).sum(axis=-1)
    return h, m1, m2


def _unwrap(value: np.ndarray):
    return float(value) if value.ndim == 0 else value


def cumulant(law: StepLaw, t):
    """Cumulant generating function ``H(t)``."""
    t = _check_domain(law, t)
    if law.kind == GAUSSIAN:
        return _unwrap(law.mean * t + 0.5 * law.sigma2 * t**2)
    return _unwrap(_lattice_tilted_moments(law, t)[0])


def cumulant_derivatives(law: StepLaw, t):
    """Return ``(H'(t), H''(t))``, the mean and variance of the law tilted by ``t``."""
    t = _check_domain(law, t)
    if law.kind == GAUSSIAN:
        return _unwrap(law.mean + law.sigma2 * t), _unwrap(np.full_like(t, law.sigma2))
    _, d1, d2 = _lattice_tilted_moments(law, t)
    return _unwrap(d1), _unwrap(d2)


def invert_mean(law: StepLaw, m, margin: float = SLOPE_MARGIN):
    """Solve ``H'(gamma) = m`` for gamma.

    Newton steps are taken inside a bracket that is maintained throughout, and
    a bisection step replaces any Newton step leaving it.  Raises
    :class:`SlopeError` when ``m`` is not strictly inside the attainable slopes
    or when the root lies within ``margin`` of the cumulant domain.
    """
    m_arr = np.asarray(m, dtype=float)
    if law.kind == GAUSSIAN:
        gam = (m_arr - law.mean) / law.sigma2
        return _unwrap(gam)

    lo_slope, hi_slope = law.slope_range()
    bad = ~np.isfinite(m_arr) | (m_arr <= lo_slope) | (m_arr >= hi_slope)
    if np.any(bad):
        raise SlopeError(f"slope {m_arr[bad].ravel()[0]!r} outside attainable range ({lo_slope}, {hi_slope})")

    a, b = law.domain_bounds
    t_min = a + margin if math.isfinite(a) else -math.inf
    t_max = b - margin if math.isfinite(b) else math.inf
    flat = m_arr.ravel()
    out = np.empty_like(flat)
    for idx, target in enumerate(flat):
        out[idx] = _invert_scalar(law, float(target), t_min, t_max)
    return _unwrap(out.reshape(m_arr.shape))


def _mean_and_var(law: StepLaw, t: float) -> tuple[float, float]:
    _, d1, d2 = _lattice_tilted_moments(law, np.asarray(t, dtype=float))
    return float(d1), float(d2)


def _invert_scalar(law: StepLaw, target: float, t_min: float, t_max: float) -> float:
    tol = 1e-12 * max(1.0, abs(target))
    d1, _ = _mean_and_var(law, 0.0)
    if abs(d1 - target) <= tol:
        return 0.0
    # bracket [lo, hi] with H'(lo) < target < H'(hi)
    lo, hi = 0.0, 0.0
    step = 1.0
    if d1 < target:
        while True:
            hi = min(hi + step, t_max)
            f_hi, _ = _mean_and_var(law, hi)
            if f_hi >= target:
                break
            if hi >= t_max or hi > 1e8:
                raise SlopeError(f"slope {target!r} needs a tilt beyond {hi!r} (domain edge {t_max!r})")
            lo = hi
            step *= 2
    else:
        while True:
            lo = max(lo - step, t_min)
            f_lo, _ = _mean_and_var(law, lo)
            if f_lo <= target:
                break
            if lo <= t_min or lo < -1e8:
                raise SlopeError(f"slope {target!r} needs a tilt beyond {lo!r} (domain edge {t_min!r})")
            hi = lo
            step *= 2

    gam = 0.5 * (lo + hi)
    for it in range(_NEWTON_MAX_ITER + _BISECT_MAX_ITER):
        f, fp = _mean_and_var(law, gam)
        resid = f - target
        if abs(resid) <= tol:
            return gam
        if resid < 0:
            lo = gam
        else:
            hi = gam
        newton = gam - resid / fp if fp > 0 else math.nan
        if it < _NEWTON_MAX_ITER and lo < newton < hi:
            gam = newton
        else:
            mid = 0.5 * (lo + hi)
            if mid in (lo, hi):
                return gam
            gam = mid
    return gam


def rate_function(law: StepLaw, x):
    """Legendre transform ``I(x) = sup_t (t x - H(t))``."""
    gam = invert_mean(law, x)
    return _unwrap(np.asarray(gam * np.asarray(x, dtype=float) - np.asarray(cumulant(law, gam))))


def tilt(law: StepLaw, gamma: float) -> StepLaw:
    """Exponentially tilted law ``P_gamma(dx) = e^{gamma x} P(dx) / M(gamma)``.

    The result is not recentred: its mean equals ``H'(gamma)``.
    """
    gamma = float(_check_domain(law, gamma))
    a, b = law.domain_bounds
    bounds = (a - gamma, b - gamma)
    name = f"{law.name}~tilt({gamma:.6g})"
    if law.kind == GAUSSIAN:
        return StepLaw(
            kind=GAUSSIAN,
            name=name,
            sigma2=law.sigma2,
            mean=law.mean + law.sigma2 * gamma,
            domain_bounds=bounds,
        )
    expo = gamma * law.offsets + law.log_probs
    w = np.exp(expo - expo.max())
    probs = w / w.sum()
    mean = float(np.dot(law.offsets, probs))
    sigma2 = float(np.dot((law.offsets - mean) ** 2, probs))
    return StepLaw(
        kind=LATTICE,
        name=name,
        sigma2=sigma2,
        mean=mean,
        offsets=law.offsets.copy(),
        probs=probs,
        domain_bounds=bounds,
        truncation_radius=law.truncation_radius,
    )
