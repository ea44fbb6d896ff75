"""Heat-bath Gibbs sampler for a Gaussian chain conditioned to stay above an obstacle.

The target on ``{-n, ..., n}`` has density proportional to

    exp(-(1 / 2 beta) sum_k (phi_k - phi_{k-1})^2) * 1{phi >= g}

with ``phi_{-n}``, ``phi_n`` fixed.  The full conditional at a site is a normal
with mean ``(phi_{k-1} + phi_{k+1}) / 2`` and variance ``beta / 2`` truncated to
``[g_k, inf)``.  Each update uses the inverse CDF of that law, so feeding the
same uniform to ordered replicas keeps them ordered.  Three replicas share all
randomness: one started at the lowest state, one at a high state, and the
recorded chain.  Once the outer two agree to ``coupling_tol`` the recorded chain
has forgotten its start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from ..errors import NotCoupledError
from ..kernel import make_rng

_SQRT2 = math.sqrt(2.0)
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


@dataclass(frozen=True)
class GaussianField:
    """Gaussian chain on ``{-n..n}`` with obstacle ``g`` (``-inf`` allowed) and fixed ends."""

    n: int
    beta: float
    obstacle: np.ndarray
    boundary: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.obstacle.shape != (2 * self.n + 1,):
            raise ValueError("obstacle must have 2n + 1 entries")
        left, right = self.boundary
        g = self.obstacle
        if (np.isfinite(g[0]) and left < g[0] - 1e-12) or (np.isfinite(g[-1]) and right < g[-1] - 1e-12):
            raise ValueError("boundary values must lie above the obstacle")

    @property
    def T(self) -> float:
        return 1.0 / self.beta

    @property
    def size(self) -> int:
        return 2 * self.n + 1

    @classmethod
    def free(cls, n: int, beta: float = 1.0) -> "GaussianField":
        return cls(n=n, beta=beta, obstacle=np.full(2 * n + 1, -np.inf))

    @classmethod
    def above(cls, g, beta: float = 1.0) -> "GaussianField":
        g = np.asarray(g, dtype=float)
        n = (g.size - 1) // 2
        return cls(n=n, beta=beta, obstacle=g, boundary=(float(g[0]), float(g[-1])))


# --------------------------------------------------------------------------
# numba kernels


@numba.njit(cache=True)
def _ndtri(q):
    """Inverse standard normal CDF (rational start plus one Halley step)."""
    if q <= 0.0:
        return -np.inf
    if q >= 1.0:
        return np.inf
    a1, a2, a3 = -3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02
    a4, a5, a6 = 1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00
    b1, b2, b3 = -5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02
    b4, b5 = 6.680131188771972e01, -1.328068155288572e01
    c1, c2, c3 = -7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00
    c4, c5, c6 = -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00
    d1, d2, d3, d4 = 7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00, 3.754408661907416e00
    plow = 0.02425
    if q < plow:
        r = math.sqrt(-2.0 * math.log(q))
        x = (((((c1 * r + c2) * r + c3) * r + c4) * r + c5) * r + c6) / ((((d1 * r + d2) * r + d3) * r + d4) * r + 1.0)
    elif q <= 1.0 - plow:
        r = q - 0.5
        s = r * r
        x = (((((a1 * s + a2) * s + a3) * s + a4) * s + a5) * s + a6) * r / (
            ((((b1 * s + b2) * s + b3) * s + b4) * s + b5) * s + 1.0
        )
    else:
        r = math.sqrt(-2.0 * math.log(1.0 - q))
        x = -(((((c1 * r + c2) * r + c3) * r + c4) * r + c5) * r + c6) / ((((d1 * r + d2) * r + d3) * r + d4) * r + 1.0)
    # Halley refinement against the lower tail of the CDF, accurate for small q
    if x < 0:
        e = 0.5 * math.erfc(-x / _SQRT2) - q
    else:
        e = (1.0 - q) - 0.5 * math.erfc(x / _SQRT2)
    u = e * math.sqrt(2 * math.pi) * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


@numba.njit(cache=True)
def _log_upper_tail(a):
    """log P(N(0,1) > a)."""
    if a < 25.0:
        return math.log(0.5 * math.erfc(a / _SQRT2))
    inv = 1.0 / (a * a)
    return -0.5 * a * a - math.log(a) - _LOG_SQRT_2PI + math.log(1.0 - inv + 3.0 * inv * inv - 15.0 * inv * inv * inv)


@numba.njit(cache=True)
def _upper_quantile_from_log(logq):
    """z with log P(N(0,1) > z) = logq, for very small tail masses."""
    z = math.sqrt(-2.0 * logq)
    for _ in range(50):
        f = _log_upper_tail(z) - logq
        # d/dz log tail = -phi(z)/tail(z)
        dlog = -math.exp(-0.5 * z * z - _LOG_SQRT_2PI - _log_upper_tail(z))
        step = f / dlog
        z -= step
        if abs(step) < 1e-13 * max(1.0, abs(z)):
            break
    return z


@numba.njit(cache=True)
def _truncated_draw(mean, sd, lower, u):
    """Quantile ``u`` of N(mean, sd^2) restricted to ``[lower, inf)``; increasing in mean and u."""
    if lower == -np.inf:
        q = 1.0 - u
    else:
        a = (lower - mean) / sd
        if a < 30.0:
            q = (1.0 - u) * 0.5 * math.erfc(a / _SQRT2)
        else:
            logq = math.log1p(-u) + _log_upper_tail(a)
            z = _upper_quantile_from_log(logq)
            x = mean + sd * z
            return x if x > lower else lower
    if q >= 1.0:
        q = 1.0 - 1e-16
    if q < 1e-300:
        z = _upper_quantile_from_log(math.log(q) if q > 0 else -745.0)
    else:
        z = -_ndtri(q)
    x = mean + sd * z
    if lower != -np.inf and x < lower:
        x = lower
    return x


@numba.njit(cache=True)
def _run_sweeps(low, cur, high, g, sd, uniforms, gaps, order_violation):
    """Apply ``len(uniforms)`` sweeps in place; sweep = left-to-right then right-to-left."""
    m = cur.size
    n_sweeps = uniforms.shape[0]
    worst = order_violation[0]
    for s in range(n_sweeps):
        idx = 0
        for direction in range(2):
            for t in range(1, m - 1):
                k = t if direction == 0 else m - 1 - t
                u = uniforms[s, idx]
                idx += 1
                gk = g[k]
                low[k] = _truncated_draw(0.5 * (low[k - 1] + low[k + 1]), sd, gk, u)
                cur[k] = _truncated_draw(0.5 * (cur[k - 1] + cur[k + 1]), sd, gk, u)
                high[k] = _truncated_draw(0.5 * (high[k - 1] + high[k + 1]), sd, gk, u)
        gap = 0.0
        for k in range(m):
            d = high[k] - low[k]
            if d > gap:
                gap = d
            v = max(low[k] - cur[k], cur[k] - high[k])
            if v > worst:
                worst = v
        gaps[s] = gap
    order_violation[0] = worst


# --------------------------------------------------------------------------


@dataclass
class GibbsResult:
    field: GaussianField
    samples: np.ndarray
    gaps: np.ndarray
    burn_in: int
    sweeps: int
    thin: int
    coupling_gap: float
    max_order_violation: float
    accepted: bool = True
    extra: dict = field(default_factory=dict)

    def site(self, k: int) -> np.ndarray:
        """Recorded values at site ``k`` (``-n <= k <= n``)."""
        return self.samples[:, k + self.field.n]


def initial_replicas(fld: GaussianField, ceiling: float):
    g = fld.obstacle
    finite = np.isfinite(g)
    low = np.where(finite, g, -ceiling)
    high = np.where(finite, g, 0.0) + ceiling
    for arr in (low, high):
        arr[0], arr[-1] = fld.boundary
    cur = 0.5 * (low + high)
    return low, cur, high


def gibbs_sample(
    fld: GaussianField,
    sweeps: int,
    burn_in: int,
    seed: int,
    thin: int | None = None,
    coupling_tol: float = 1e-3,
    ceiling: float | None = None,
    max_burn_in: int | None = None,
    stream: int = 0,
    chunk: int = 256,
) -> GibbsResult:
    """Run the sandwiched heat-bath chain and record thinned configurations.

    Burn-in lasts at least ``burn_in`` sweeps and continues until the gap
    between the low and high replicas is at most ``coupling_tol``; if that has
    not happened after ``max_burn_in`` sweeps (default ``20 * burn_in``)
    :class:`NotCoupledError` is raised.  Afterwards ``sweeps`` further sweeps
    are run and every ``thin``-th configuration (default ``n``) is stored.
    """
    if sweeps < 1 or burn_in < 0:
        raise ValueError("need sweeps >= 1 and burn_in >= 0")
    thin = fld.n if thin is None else thin
    if thin < 1:
        raise ValueError("thin must be >= 1")
    if ceiling is None:
        ceiling = 6.0 * math.sqrt(fld.beta * 2 * fld.n) + 1.0
    if max_burn_in is None:
        max_burn_in = max(20 * burn_in, 1000)
    rng = make_rng(seed, stream)
    low, cur, high = initial_replicas(fld, ceiling)
    g = np.where(np.isfinite(fld.obstacle), fld.obstacle, -np.inf)
    sd = math.sqrt(fld.beta / 2)
    per_sweep = 2 * (fld.size - 2)
    violation = np.zeros(1)
    gap_log: list[np.ndarray] = []

    done = 0
    while True:
        if done >= max_burn_in:
            last = gap_log[-1][-1] if gap_log else math.inf
            raise NotCoupledError(f"sandwich gap {last:.3g} above tolerance {coupling_tol:.3g} after {done} sweeps")
        todo = min(chunk, max_burn_in - done)
        if done < burn_in:
            todo = min(todo, burn_in - done)
        gaps = np.empty(todo)
        _run_sweeps(low, cur, high, g, sd, rng.random((todo, per_sweep)), gaps, violation)
        gap_log.append(gaps)
        done += todo
        if done >= burn_in and gaps[-1] <= coupling_tol:
            break
    burn = done

    samples = []
    remaining = sweeps
    since = 0
    while remaining > 0:
        todo = min(chunk, remaining, thin - since)
        gaps = np.empty(todo)
        _run_sweeps(low, cur, high, g, sd, rng.random((todo, per_sweep)), gaps, violation)
        gap_log.append(gaps)
        remaining -= todo
        since += todo
        if since == thin:
            samples.append(cur.copy())
            since = 0
    all_gaps = np.concatenate(gap_log)
    return GibbsResult(
        field=fld,
        samples=np.array(samples).reshape(-1, fld.size),
        gaps=all_gaps,
        burn_in=burn,
        sweeps=sweeps,
        thin=thin,
        coupling_gap=float(all_gaps[burn - 1]),
        max_order_violation=float(violation[0]),
    )
