"""Exact transfer-matrix computation of the area-tilted kernel.

After tilting, the walk above the obstacle becomes a walk ``Z = S - hn`` with
steps drawn from the tilted laws, constrained to ``Z >= 0`` and weighted by
``exp(-sum_{k<n} (alpha_k / n) Z_k)``.  The forward table holds

    F[k, j] = log of the total weight of paths from S_0 = 0 to S_k = floor[k] + j,

the backward table ``B[k, j]`` the weight from there to ``S_n = ceil(hn[n])``
(excluding the potential at time k, which ``F`` already carries).  Heights are
stored relative to ``floor[k] = ceil(hn[k])`` on a window of ``cap + 1`` rows.
Everything is accumulated in log space.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import MassLossError
from .obstacle import ObstacleProfile, TiltSchedule, ceil_height, discretize, tilt_schedule
from .step_law import SLOPE_MARGIN, StepLaw, cumulant

DEFAULT_K_CAP = 12.0
DEFAULT_MASS_TOL = 1e-10


def logsumexp_rows(stack: np.ndarray, axis: int = 0) -> np.ndarray:
    """``log(sum(exp(stack)))`` along ``axis``; all ``-inf`` slices give ``-inf``."""
    m = stack.max(axis=axis)
    m_safe = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.exp(stack - np.expand_dims(m_safe, axis)).sum(axis=axis)
        return np.log(s) + m_safe


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, stream)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(stream,))))


@dataclass(frozen=True)
class HeightGrid:
    floor: np.ndarray
    cap: int

    @property
    def width(self) -> int:
        return self.cap + 1

    @classmethod
    def for_profile(cls, profile: ObstacleProfile, k_cap: float = DEFAULT_K_CAP) -> "HeightGrid":
        if k_cap <= 0:
            raise ValueError("k_cap must be positive")
        cap = math.ceil(k_cap * profile.n ** (1 / 3))
        return cls(floor=profile.floor, cap=cap)


@dataclass(frozen=True)
class KernelTables:
    n: int
    hn: np.ndarray
    floor: np.ndarray
    cap: int
    offsets: np.ndarray
    #: log tilted step probabilities, row k is the law of step k (row 0 unused)
    log_step: np.ndarray
    #: log potential factor -(alpha_k/n)(s - hn[k]) at each grid point, zero at k = 0, n
    potential: np.ndarray
    F: np.ndarray
    B: np.ndarray
    logZ: float
    mass_loss: float
    runtime_ms: float

    @property
    def width(self) -> int:
        return self.cap + 1

    def heights(self, k: int) -> np.ndarray:
        """``W_k`` value of each grid row at time k."""
        return self.floor[k] + np.arange(self.width) - self.hn[k]

    def consistency_error(self) -> float:
        """``max_k |logsumexp(F_k + B_k) - logZ|``."""
        return float(np.max(np.abs(logsumexp_rows(self.F + self.B, axis=1) - self.logZ)))

    def diagnostics(self) -> dict:
        return {
            "n": self.n,
            "logZ": self.logZ,
            "mass_loss": self.mass_loss,
            "cap": self.cap,
            "runtime_ms": self.runtime_ms,
        }

    def diagnostics_json(self) -> str:
        return json.dumps(self.diagnostics(), sort_keys=True)


class Marginal(NamedTuple):
    heights: np.ndarray
    probs: np.ndarray


def _tilted_log_steps(law: StepLaw, schedule: TiltSchedule) -> np.ndarray:
    n = schedule.n
    x = law.offsets.astype(float)
    out = np.full((n + 1, x.size), -np.inf)
    gam = schedule.gamma[1:]
    h = np.asarray(cumulant(law, gam))
    out[1:] = law.log_probs[None, :] + gam[:, None] * x[None, :] - h[:, None]
    return out


class _Stepper:
    """Applies one weighted transition of the kernel to a log-vector on the grid."""

    def __init__(self, tables_like: dict):
        self.floor = tables_like["floor"]
        self.offsets = tables_like["offsets"]
        self.log_step = tables_like["log_step"]
        self.potential = tables_like["potential"]
        self.width = tables_like["width"]
        self.n = tables_like["n"]
        shifts = np.diff(self.floor)
        self.pad = int(np.max(np.abs(self.offsets)) + np.max(np.abs(shifts), initial=0)) + 1

    def forward(self, prev: np.ndarray, k: int) -> np.ndarray:
        """Vector at time k from the vector at time k-1 (potential and endpoint included)."""
        W, pad = self.width, self.pad
        padded = np.full(W + 2 * pad, -np.inf)
        padded[pad : pad + W] = prev
        shift = self.floor[k] - self.floor[k - 1]
        stack = np.empty((self.offsets.size, W))
        for a, d in enumerate(self.offsets):
            start = pad + shift - d
            stack[a] = padded[start : start + W] + self.log_step[k, a]
        out = logsumexp_rows(stack) + self.potential[k]
        if k == self.n:
            out[1:] = -np.inf
        return out

    def backward(self, nxt: np.ndarray, k: int) -> np.ndarray:
        """Backward vector at time k-1 from the backward vector at time k."""
        W, pad = self.width, self.pad
        padded = np.full(W + 2 * pad, -np.inf)
        padded[pad : pad + W] = nxt + self.potential[k]
        shift = self.floor[k] - self.floor[k - 1]
        stack = np.empty((self.offsets.size, W))
        for a, d in enumerate(self.offsets):
            start = pad - shift + d
            stack[a] = padded[start : start + W] + self.log_step[k, a]
        out = logsumexp_rows(stack)
        if k - 1 == 0:
            out[1:] = -np.inf
        return out


def build_tables(
    law: StepLaw,
    profile: ObstacleProfile,
    schedule: TiltSchedule,
    grid: HeightGrid | None = None,
    mass_tol: float = DEFAULT_MASS_TOL,
    check_mass: bool = True,
) -> KernelTables:
    """Forward and backward log-partition tables of the area-tilted kernel."""
    if not law.is_lattice:
        raise ValueError("the kernel engine needs a lattice step law")
    t0 = time.perf_counter()
    n = profile.n
    if grid is None:
        grid = HeightGrid.for_profile(profile)
    W = grid.width
    floor = np.asarray(grid.floor, dtype=np.int64)
    hn = profile.hn
    if floor[0] != 0 or hn[0] != 0:
        raise ValueError("the obstacle must start at height 0")

    rows = floor[:, None] + np.arange(W)[None, :] - hn[:, None]
    potential = np.zeros((n + 1, W))
    potential[1:n] = -(schedule.alpha[1:n, None] / n) * rows[1:n]
    log_step = _tilted_log_steps(law, schedule)

    stepper = _Stepper(
        {"floor": floor, "offsets": law.offsets, "log_step": log_step, "potential": potential, "width": W, "n": n}
    )
    F = np.full((n + 1, W), -np.inf)
    F[0, 0] = 0.0
    for k in range(1, n + 1):
        F[k] = stepper.forward(F[k - 1], k)
    B = np.full((n + 1, W), -np.inf)
    B[n, 0] = 0.0
    for k in range(n, 0, -1):
        B[k - 1] = stepper.backward(B[k], k)
    logZ = float(F[n, 0])

    with np.errstate(invalid="ignore"):
        top = F[1:n, W - 1] + B[1:n, W - 1] - logZ
    mass_loss = float(np.exp(np.max(top, initial=-np.inf))) if n > 1 else 0.0
    if check_mass and mass_loss > mass_tol:
        raise MassLossError(f"n={n}: weight {mass_loss:.3e} reaches the grid cap {grid.cap} (tol {mass_tol:.1e})")

    for arr in (F, B, potential, log_step):
        arr.setflags(write=False)
    return KernelTables(
        n=n,
        hn=hn,
        floor=floor,
        cap=grid.cap,
        offsets=law.offsets,
        log_step=log_step,
        potential=potential,
        F=F,
        B=B,
        logZ=logZ,
        mass_loss=mass_loss,
        runtime_ms=1000 * (time.perf_counter() - t0),
    )


def _stepper_for(tables: KernelTables) -> _Stepper:
    return _Stepper(
        {
            "floor": tables.floor,
            "offsets": tables.offsets,
            "log_step": tables.log_step,
            "potential": tables.potential,
            "width": tables.width,
            "n": tables.n,
        }
    )


def log_marginal(tables: KernelTables, k: int) -> np.ndarray:
    if not 0 <= k <= tables.n:
        raise IndexError(f"time {k} outside 0..{tables.n}")
    return tables.F[k] + tables.B[k] - tables.logZ


def marginal(tables: KernelTables, k: int) -> Marginal:
    """Law of ``W_k = S_k - hn[k]`` under the conditioned measure, on the grid rows."""
    probs = np.exp(log_marginal(tables, k))
    return Marginal(tables.heights(k), probs)


def moments(tables: KernelTables, k: int, r: int) -> float:
    """``E(W_k^r)``."""
    if r == 0:
        return 1.0
    w, p = marginal(tables, k)
    return float(np.dot(p, w**r))


def variance(tables: KernelTables, k: int) -> float:
    w, p = marginal(tables, k)
    m = np.dot(p, w)
    return float(np.dot(p, (w - m) ** 2))


def log_tail(tables: KernelTables, k: int, lam: float) -> float:
    """``log P(W_k >= lam n^{1/3})``."""
    lm = log_marginal(tables, k)
    keep = tables.heights(k) >= lam * tables.n ** (1 / 3)
    if not np.any(keep):
        return -math.inf
    return float(logsumexp_rows(lm[keep]))


def tail(tables: KernelTables, k: int, lam: float) -> float:
    """``P(W_k >= lam n^{1/3})``."""
    return math.exp(log_tail(tables, k, lam))


def covariance(tables: KernelTables, i: int, j: int) -> float:
    """``Cov(W_i, W_j)`` for ``i <= j``.

    The centred height at time i is split into its positive and negative parts,
    each pushed forward to time j through the weighted transitions and then
    contracted with the backward table and the centred height at time j.
    """
    n = tables.n
    if not 0 <= i <= j <= n:
        raise ValueError(f"need 0 <= i <= j <= n, got i={i}, j={j}")
    if i == 0 or j == n:
        return 0.0
    wi, pi = marginal(tables, i)
    wj, pj = marginal(tables, j)
    ci = wi - np.dot(pi, wi)
    cj = wj - np.dot(pj, wj)
    stepper = _stepper_for(tables)
    with np.errstate(divide="ignore"):
        parts_i = [tables.F[i] + np.log(np.maximum(ci, 0)), tables.F[i] + np.log(np.maximum(-ci, 0))]
        log_cj = [np.log(np.maximum(cj, 0)), np.log(np.maximum(-cj, 0))]
    pushed = []
    for g in parts_i:
        for k in range(i + 1, j + 1):
            g = stepper.forward(g, k)
        pushed.append(g)
    total = 0.0
    for si, g in zip((1.0, -1.0), pushed):
        for sj, lc in zip((1.0, -1.0), log_cj):
            total += si * sj * math.exp(float(logsumexp_rows(g + tables.B[j] + lc - tables.logZ)))
    return total


def sample_paths(tables: KernelTables, count: int, seed: int, stream: int = 0) -> np.ndarray:
    """Exact i.i.d. draws of ``S`` from the conditioned law, shape ``(count, n + 1)``.

    Paths are built backwards from ``S_n``; the step into time k is chosen with
    probability proportional to ``exp(F[k-1, j] + log p_k(d))``.
    """
    rng = make_rng(seed, stream)
    n, W = tables.n, tables.width
    offsets = tables.offsets
    rows = np.zeros((count, n + 1), dtype=np.int64)
    j_cur = np.zeros(count, dtype=np.int64)
    rows[:, n] = tables.floor[n]
    for k in range(n, 0, -1):
        shift = tables.floor[k] - tables.floor[k - 1]
        cand = j_cur[:, None] + shift - offsets[None, :]
        valid = (cand >= 0) & (cand < W)
        logw = np.where(valid, tables.F[k - 1][np.clip(cand, 0, W - 1)], -np.inf) + tables.log_step[k][None, :]
        logw -= logw.max(axis=1, keepdims=True)
        w = np.exp(logw)
        cdf = np.cumsum(w, axis=1)
        u = rng.random(count) * cdf[:, -1]
        pick = (cdf < u[:, None]).sum(axis=1)
        pick = np.minimum(pick, offsets.size - 1)
        j_cur = cand[np.arange(count), pick]
        rows[:, k - 1] = tables.floor[k - 1] + j_cur
    return rows


def build_for(
    law: StepLaw,
    spec,
    n: int,
    k_cap: float = DEFAULT_K_CAP,
    mass_tol: float = DEFAULT_MASS_TOL,
    check_mass: bool = True,
    slope_margin: float = SLOPE_MARGIN,
) -> KernelTables:
    """Convenience: discretise, tilt and build in one call."""
    profile = discretize(spec, n)
    schedule = tilt_schedule(law, profile, margin=slope_margin)
    grid = HeightGrid.for_profile(profile, k_cap)
    return build_tables(law, profile, schedule, grid, mass_tol=mass_tol, check_mass=check_mass)


__all__ = [
    "HeightGrid",
    "KernelTables",
    "Marginal",
    "build_tables",
    "build_for",
    "marginal",
    "moments",
    "variance",
    "tail",
    "log_tail",
    "covariance",
    "sample_paths",
    "make_rng",
    "ceil_height",
]
