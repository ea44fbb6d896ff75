import json
import math

import numpy as np
import pytest

from obstacle_walk import kernel, oracles
from obstacle_walk.errors import MassLossError
from obstacle_walk.obstacle import cosine, discretize, quadratic, tabulated, tilt_schedule
from obstacle_walk.step_law import centered_binomial, lattice_law, lazy_srw, uniform3

ORACLE_LAWS = [uniform3(), centered_binomial(2), centered_binomial(4), lazy_srw(0.3),
               lattice_law([-2, -1, 0, 1, 3], [0.1, 0.25, 0.3, 0.3, 0.05], name="skew5")]


def setup(law, spec, n, k_cap=kernel.DEFAULT_K_CAP):
    prof = discretize(spec, n)
    sch = tilt_schedule(law, prof)
    tables = kernel.build_tables(law, prof, sch, kernel.HeightGrid.for_profile(prof, k_cap), check_mass=False)
    return prof, sch, tables


@pytest.fixture(scope="module")
def toy():
    law, spec = uniform3(), quadratic(0.5)
    prof, sch, tables = setup(law, spec, 6)
    return tables, oracles.enumerate_paths(law, prof, sch)


def test_flat_obstacle_two_steps():
    zero = tabulated(lambda x: 0.0 * np.asarray(x), lambda x: 0.0 * np.asarray(x), lambda x: 0.0 * np.asarray(x))
    _, sch, tables = setup(uniform3(), zero, 2)
    assert np.all(sch.gamma[1:] == 0) and sch.alpha[1] == 0
    assert math.exp(tables.logZ) == pytest.approx(2 / 9, rel=1e-14)


def test_forward_table_starts_at_origin(toy):
    tables, _ = toy
    assert tables.F[0, 0] == 0.0
    assert np.all(np.isneginf(tables.F[0, 1:]))


def test_toy_quantities_against_enumeration(toy):
    tables, en = toy
    assert tables.logZ == pytest.approx(en.logZ, rel=1e-12)
    marg = kernel.marginal(tables, 3)
    ref = en.marginal(3)
    for s, p in zip(tables.floor[3] + np.arange(tables.width), marg.probs):
        assert oracles.relative_error(p, ref.get(int(s), 0.0)) <= 1e-12
    for r in (1, 2, 3):
        assert kernel.moments(tables, 3, r) == pytest.approx(en.moment(3, r), rel=1e-12)
    assert kernel.covariance(tables, 2, 4) == pytest.approx(en.covariance(2, 4), rel=1e-12)
    lam = 0.5 / 6 ** (1 / 3)  # between the two lowest rows at k = 3
    assert kernel.tail(tables, 3, lam) == pytest.approx(en.tail(3, lam), rel=1e-12)


@pytest.mark.parametrize("law", ORACLE_LAWS, ids=lambda l: l.name)
@pytest.mark.parametrize("spec", [quadratic(0.5), cosine(0.4)], ids=["quadratic", "cosine"])
def test_kernel_matches_enumeration(law, spec):
    for n in range(2, 9):
        prof, sch, tables = setup(law, spec, n)
        cmp = oracles.compare_with_kernel(law, prof, sch, tables)
        assert cmp.max_rel_error <= 1e-12, cmp
        assert abs(cmp.change_of_measure_gap) <= 1e-12


def test_trivial_values(toy):
    tables, _ = toy
    assert kernel.moments(tables, 3, 0) == 1.0
    assert kernel.moments(tables, 0, 2) == 0.0
    assert kernel.tail(tables, 3, 0.0) == pytest.approx(1.0, abs=1e-14)
    assert kernel.tail(tables, 3, 10 * tables.cap) == 0.0
    assert kernel.covariance(tables, 0, 4) == 0.0 and kernel.covariance(tables, 2, 6) == 0.0
    assert kernel.covariance(tables, 3, 3) == pytest.approx(kernel.variance(tables, 3), rel=1e-12)


@pytest.fixture(scope="module")
def medium():
    return setup(uniform3(), quadratic(0.5), 300)[2]


def test_marginals_normalised_and_tails_monotone(medium):
    t = medium
    for k in range(0, t.n + 1, 25):
        m = kernel.marginal(t, k)
        assert np.all(m.probs >= 0)
        assert m.probs.sum() == pytest.approx(1.0, abs=1e-10)
    tails = [kernel.tail(t, 150, lam) for lam in np.linspace(0, 4, 41)]
    assert np.all(np.diff(tails) <= 1e-15)
    assert t.logZ <= 0


def test_symmetric_setup_has_symmetric_marginals(medium):
    t = medium
    for k in (1, 17, 60, 149):
        np.testing.assert_allclose(kernel.marginal(t, k).probs, kernel.marginal(t, t.n - k).probs, atol=1e-10)


def test_forward_backward_consistency():
    for law, spec, n in [(uniform3(), quadratic(0.5), 1000), (lazy_srw(0.5), cosine(0.5), 700),
                         (centered_binomial(4), quadratic(0.8), 500)]:
        t = setup(law, spec, n)[2]
        assert t.consistency_error() <= 1e-9
        assert t.mass_loss <= kernel.DEFAULT_MASS_TOL


def test_doubling_cap_leaves_logz_unchanged():
    for n in (512, 2048):
        a = setup(uniform3(), quadratic(0.5), n, k_cap=12)[2]
        b = setup(uniform3(), quadratic(0.5), n, k_cap=24)[2]
        assert abs(a.logZ - b.logZ) <= 1e-8


def test_small_cap_is_rejected():
    prof = discretize(quadratic(0.5), 512)
    sch = tilt_schedule(uniform3(), prof)
    with pytest.raises(MassLossError):
        kernel.build_tables(uniform3(), prof, sch, kernel.HeightGrid.for_profile(prof, 0.3))


def test_diagnostics_blob(medium):
    blob = json.loads(medium.diagnostics_json())
    assert set(blob) == {"n", "logZ", "mass_loss", "cap", "runtime_ms"}
    assert blob["n"] == 300


def test_sampled_paths_respect_constraints(medium):
    t = medium
    paths = kernel.sample_paths(t, 2000, seed=5)
    assert paths.shape == (2000, t.n + 1)
    assert np.all(paths[:, 0] == 0) and np.all(paths[:, -1] == t.floor[-1])
    assert np.all(paths - t.hn[None, :] >= -1e-12)
    assert set(np.unique(np.diff(paths, axis=1))) <= {-1, 0, 1}


def test_sampling_is_reproducible(medium):
    a = kernel.sample_paths(medium, 50, seed=11, stream=3)
    b = kernel.sample_paths(medium, 50, seed=11, stream=3)
    c = kernel.sample_paths(medium, 50, seed=11, stream=4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_sampled_marginal_matches_exact(toy):
    tables, _ = toy
    count = 10**6
    paths = kernel.sample_paths(tables, count, seed=2024)
    exact = kernel.marginal(tables, 3)
    for s, p in zip(tables.floor[3] + np.arange(tables.width), exact.probs):
        freq = np.mean(paths[:, 3] == s)
        se = math.sqrt(max(p * (1 - p), 1e-300) / count)
        assert abs(freq - p) <= 4 * se + 1e-12
