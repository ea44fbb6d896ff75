"""Exhaustive path enumeration for small ``n``: the reference every kernel result is checked against."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from . import kernel
from .obstacle import ObstacleProfile, TiltSchedule, ceil_height
from .step_law import StepLaw, rate_function, tilt

MAX_PATHS = 2_000_000


@dataclass(frozen=True)
class Enumeration:
    """All admissible paths with their log weights under the area-tilted measure."""

    n: int
    hn: np.ndarray
    paths: np.ndarray
    log_weights: np.ndarray
    log_original: np.ndarray

    @property
    def logZ(self) -> float:
        return float(logsumexp(self.log_weights))

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_weights - self.logZ)

    def heights(self, k: int) -> np.ndarray:
        return self.paths[:, k] - self.hn[k]

    def marginal(self, k: int) -> dict[int, float]:
        """``{S_k: probability}``."""
        out: dict[int, float] = {}
        for s, pr in zip(self.paths[:, k], self.probs):
            out[int(s)] = out.get(int(s), 0.0) + float(pr)
        return out

    def moment(self, k: int, r: int) -> float:
        return float(np.dot(self.probs, self.heights(k) ** r))

    def variance(self, k: int) -> float:
        w = self.heights(k)
        m = np.dot(self.probs, w)
        return float(np.dot(self.probs, (w - m) ** 2))

    def covariance(self, i: int, j: int) -> float:
        wi, wj, p = self.heights(i), self.heights(j), self.probs
        return float(np.dot(p, (wi - np.dot(p, wi)) * (wj - np.dot(p, wj))))

    def tail(self, k: int, lam: float) -> float:
        keep = self.heights(k) >= lam * self.n ** (1 / 3)
        return float(self.probs[keep].sum())

    def log_original_probability(self) -> float:
        """``log P(S >= hn, S_n = ceil(hn[n]))`` under the untilted walk."""
        return float(logsumexp(self.log_original)) if self.log_original.size else -math.inf


def enumerate_paths(law: StepLaw, profile: ObstacleProfile, schedule: TiltSchedule) -> Enumeration:
    """Every path from ``0`` to ``ceil(hn[n])`` staying at or above ``hn``, with exact weights."""
    if not law.is_lattice:
        raise ValueError("enumeration needs a lattice law")
    n = profile.n
    offsets = law.offsets
    if offsets.size**n > MAX_PATHS:
        raise ValueError(f"{offsets.size}^{n} paths is too many to enumerate")
    floor = np.asarray(ceil_height(profile.hn))
    end = floor[n]
    idx = np.array(list(itertools.product(range(offsets.size), repeat=n)), dtype=np.int64).reshape(-1, n)
    steps = offsets[idx]
    paths = np.zeros((idx.shape[0], n + 1), dtype=np.int64)
    paths[:, 1:] = np.cumsum(steps, axis=1)
    keep = np.all(paths >= floor[None, :], axis=1) & (paths[:, n] == end)
    paths, idx = paths[keep], idx[keep]

    log_tilted = np.array([tilt(law, schedule.gamma[k]).log_probs for k in range(1, n + 1)])
    cols = np.arange(n)
    logw = log_tilted[cols[None, :], idx].sum(axis=1)
    Z = paths[:, 1:n] - profile.hn[None, 1:n]
    logw -= (Z * (schedule.alpha[None, 1:n] / n)).sum(axis=1)
    log_orig = law.log_probs[idx].sum(axis=1)
    return Enumeration(n=n, hn=profile.hn, paths=paths, log_weights=logw, log_original=log_orig)


def change_of_measure_gap(law: StepLaw, profile: ObstacleProfile, schedule: TiltSchedule, logZ: float) -> float:
    """``log P(original event) - (logZ - sum I(delta_k) - gamma_n zn)``, zero up to rounding."""
    en = enumerate_paths(law, profile, schedule)
    predicted = logZ - float(np.sum(rate_function(law, profile.delta[1:]))) - schedule.gamma[profile.n] * profile.zn
    return en.log_original_probability() - predicted


ZERO_FLOOR = 1e-15


def relative_error(value: float, reference: float, floor: float = ZERO_FLOOR) -> float:
    """Relative error, or absolute error when the reference is below ``floor`` (an exact zero)."""
    if abs(reference) > floor:
        return abs(value - reference) / abs(reference)
    return abs(value)


@dataclass(frozen=True)
class OracleComparison:
    n: int
    paths: int
    logZ: float
    max_rel_error: float
    worst: str
    change_of_measure_gap: float


def compare_with_kernel(law: StepLaw, profile: ObstacleProfile, schedule: TiltSchedule, tables) -> OracleComparison:
    """Largest relative discrepancy between kernel and enumeration over logZ, marginals, Var and Cov."""
    en = enumerate_paths(law, profile, schedule)
    n = profile.n
    errors = {"logZ": relative_error(tables.logZ, en.logZ)}
    for k in range(n + 1):
        ref = en.marginal(k)
        heights = tables.floor[k] + np.arange(tables.width)
        probs = kernel.marginal(tables, k).probs
        errors[f"marginal[{k}]"] = max(relative_error(p, ref.get(int(s), 0.0)) for s, p in zip(heights, probs))
        errors[f"var[{k}]"] = relative_error(kernel.variance(tables, k), en.variance(k))
        for j in range(k, n + 1):
            errors[f"cov[{k},{j}]"] = relative_error(kernel.covariance(tables, k, j), en.covariance(k, j))
    worst = max(errors, key=errors.get)
    predicted = tables.logZ - float(np.sum(rate_function(law, profile.delta[1:]))) - schedule.gamma[n] * profile.zn
    return OracleComparison(
        n=n,
        paths=int(en.paths.shape[0]),
        logZ=en.logZ,
        max_rel_error=errors[worst],
        worst=worst,
        change_of_measure_gap=en.log_original_probability() - predicted,
    )
