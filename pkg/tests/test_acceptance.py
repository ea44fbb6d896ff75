"""Acceptance gate: one test per criterion, each recording a PASS/FAIL line."""

import math
import time

import numpy as np
import pytest
from scipy import integrate

from obstacle_walk import kernel, oracles, scaling
from obstacle_walk.gaussian import (
    GaussianField,
    SamplerConfig,
    build_p_obstacles,
    default_plateau,
    excursion_density,
    excursion_marginal_density,
    gibbs_sample,
    holley_check,
    transfer_marginal,
)
from obstacle_walk.obstacle import discretize, quadratic, tilt_schedule
from obstacle_walk.step_law import centered_binomial, uniform3

N_GRID = [512, 1024, 2048, 4096, 8192]
LAW, SPEC = uniform3(), quadratic(0.5)


@pytest.fixture(scope="module")
def cache():
    return scaling.TableCache(maxsize=len(N_GRID))


def test_criterion_1_oracle_equivalence(verdict_line):
    start = time.perf_counter()
    worst, gap, consistency = 0.0, 0.0, 0.0
    for law in (uniform3(), centered_binomial(2)):
        for n in range(2, 9):
            prof = discretize(SPEC, n)
            sch = tilt_schedule(law, prof)
            tables = kernel.build_tables(law, prof, sch, check_mass=False)
            cmp = oracles.compare_with_kernel(law, prof, sch, tables)
            worst = max(worst, cmp.max_rel_error)
            gap = max(gap, abs(cmp.change_of_measure_gap))
            consistency = max(consistency, tables.consistency_error())
    elapsed = time.perf_counter() - start
    passed = worst <= 1e-12 and gap <= 1e-12 and elapsed < 10
    verdict_line(1, passed, f"max relative error {worst:.2e} (<= 1e-12), measure gap {gap:.2e}, "
                            f"runtime {elapsed:.2f} s (< 10 s)")
    assert passed


def test_criterion_2_ld_correction(verdict_line, cache):
    rep = scaling.ld_correction_experiment(LAW, SPEC, N_GRID, cache=cache)
    fit = rep.fit
    verdict_line(2, rep.verdict, f"slope of ln(-logZ) vs ln n = {fit.slope:.4f} (target 1/3 +- 0.08)")
    assert rep.verdict


def test_criterion_3_tail_exponent(verdict_line, cache):
    rep = scaling.tail_experiment(LAW, SPEC, 8192, k=4096, window=(2.0, 6.0),
                                  lambdas=np.geomspace(2.0, 6.0, 9), cache=cache)
    chk = rep.check("tail_slope")
    verdict_line(3, rep.verdict, f"slope of ln(-ln P) vs ln lambda on [2, 6] = {chk.fit.slope:.4f} "
                                 f"(target 1.5 +- 0.15; limiting Airy-squared law gives "
                                 f"{chk.detail['airy_reference_slope']:.4f} on the same window)")
    assert rep.verdict


def test_criterion_4_variance(verdict_line, cache):
    rep = scaling.variance_experiment(LAW, SPEC, N_GRID, cache=cache)
    slope = rep.check("variance_slope").fit.slope
    spreads = [rep.check(f"moment_ratio_r{r}").detail["spread"] for r in (1, 2, 3)]
    verdict_line(4, rep.verdict, f"variance slope {slope:.4f} (target 2/3 +- 0.08); moment ratio spreads "
                                 + ", ".join(f"{s:.3f}" for s in spreads) + " (< 2)")
    assert rep.verdict


def test_criterion_5_covariance(verdict_line, cache):
    rep = scaling.covariance_experiment(LAW, SPEC, 4096, cache=cache)
    fit = rep.check("covariance_decay").fit
    stable = scaling.leave_one_out(rep.check("covariance_decay"))
    passed = rep.verdict
    verdict_line(5, passed, f"-ln|Cov| vs (j-i)/n^(2/3): slope {fit.slope:.4f} (> 0), R^2 {fit.r2:.5f} "
                            f"(>= 0.95), leave-one-out stable: {stable}")
    assert passed


def test_criterion_6_free_field(verdict_line):
    rep = scaling.free_field_experiment()
    z = rep.check("free_field_covariance").detail["max_z"]
    coupled = rep.check("sandwich_coupling")
    verdict_line(6, rep.verdict, f"5x5 bridge covariances: max |z| {z:.2f} (<= 4); sandwich coupling "
                                 f"certified: {coupled.passed} (gap {coupled.detail['coupling_gap']:.1e})")
    assert rep.verdict


def test_criterion_7_alpha_p(verdict_line):
    rep = scaling.alpha_p_experiment([1.5, 2, 3], [256, 512, 1024, 2048, 4096], SamplerConfig(), threads=3)
    slopes = {p: rep.check(f"alpha_p_slope_p{p:g}") for p in (1.5, 2, 3)}
    tail = rep.check("alpha_p_tail_p2")
    passed = all(c.passed for c in slopes.values()) and tail.passed
    parts = [f"p={p:g} slope {c.fit.slope:.4f} (target {c.target:.4f} +- 0.10)" for p, c in slopes.items()]
    parts.append(f"p=2 tail slope {tail.fit.slope:.4f} (target 1.5 +- 0.2)")
    verdict_line(7, passed, "; ".join(parts))
    assert passed


def test_criterion_8_property_suites(verdict_line, cache):
    holley = holley_check(6, seed=8, trials=10_000)

    norms = []
    for L, t in [(1.0, 0.5), (10.0, 2.5), (100.0, 90.0)]:
        val, _ = integrate.quad(lambda x: float(excursion_marginal_density(L, t, x)), 0, np.inf,
                                epsabs=1e-12, epsrel=1e-12)
        norms.append(abs(val - 1))
    two, _ = integrate.dblquad(lambda y, x: excursion_density(6.0, [2.0, 4.0], [x, y]), 0, 30, 0, 30,
                               epsabs=1e-11, epsrel=1e-11)
    norms.append(abs(two - 1))
    norm_err = max(norms)

    p, n = 2, 16
    ob = build_p_obstacles(p, n, default_plateau(p, n))
    low = gibbs_sample(GaussianField.above(ob.h_minus), sweeps=60_000, burn_in=500, seed=31, thin=4).site(0)
    high = gibbs_sample(GaussianField.above(ob.h), sweeps=60_000, burn_in=500, seed=32, thin=4).site(0)
    worst_z = -math.inf
    for x in np.quantile(np.concatenate([low, high]), np.linspace(0.05, 0.95, 19)):
        f_low, f_high = np.mean(low <= x), np.mean(high <= x)
        # thinning leaves some autocorrelation; inflate the binomial error accordingly
        se = math.sqrt(f_low * (1 - f_low) / low.size + f_high * (1 - f_high) / high.size) * math.sqrt(8)
        worst_z = max(worst_z, (f_high - f_low) / se)
    t_low = transfer_marginal(GaussianField.above(ob.h_minus), dx=0.05, height_cap=30)
    t_high = transfer_marginal(GaussianField.above(ob.h), dx=0.05, height_cap=30)
    exact_ok = all(t_low.probs[t_low.heights <= x].sum() >= t_high.probs[t_high.heights <= x].sum() - 1e-9
                   for x in np.linspace(n - 1, n + 6, 30))
    fkg = worst_z <= 4 and exact_ok

    consistency = 0.0
    for nn in N_GRID:
        consistency = max(consistency, cache.get(LAW, SPEC, nn, scaling.KernelSettings()).consistency_error())
    cap_change = 0.0
    for nn in (512, 2048):
        base = cache.get(LAW, SPEC, nn, scaling.KernelSettings()).logZ
        doubled = kernel.build_for(LAW, SPEC, nn, k_cap=24, mass_tol=kernel.DEFAULT_MASS_TOL, check_mass=False).logZ
        cap_change = max(cap_change, abs(doubled - base))

    passed = holley.passed and norm_err <= 1e-8 and fkg and consistency <= 1e-9 and cap_change <= 1e-8
    verdict_line(8, passed, f"Holley 10^4 trials min slack {min(holley.min_density_slack, holley.min_bond_slack):.1e}; "
                            f"excursion normalisation error {norm_err:.1e} (<= 1e-8); FKG CDF worst z {worst_z:.2f} "
                            f"(<= 4), exact ordering {exact_ok}; consistency {consistency:.1e} (<= 1e-9); "
                            f"K_cap doubling {cap_change:.1e} (<= 1e-8)")
    assert passed
