import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obstacle_walk.errors import SlopeError
from obstacle_walk.obstacle import (
    ceil_height,
    cosine,
    discretize,
    limiting_alpha,
    obstacle_from_name,
    quadratic,
    tilt_schedule,
)
from obstacle_walk.step_law import cumulant_derivatives, gaussian, lazy_srw, two_sided_geometric, uniform3


def test_quadratic_profile_values():
    prof = discretize(quadratic(0.5), 8)
    assert prof.hn[0] == 0.0
    assert prof.hn[4] == 1.0
    assert prof.delta[1:].sum() == pytest.approx(0.0, abs=1e-12)
    assert prof.hn[8] == 0.0 and prof.zn == 0.0


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 400), c=st.floats(0.05, 0.9), family=st.sampled_from(["quadratic", "cosine"]))
def test_profile_invariants(n, c, family):
    prof = discretize(obstacle_from_name(family, c), n)
    assert abs(prof.delta[1:].sum() - prof.hn[n]) <= 1e-12 * max(1.0, n)
    assert np.all(np.diff(prof.delta[1:]) < 0)
    assert 0 <= prof.zn < 1


def test_cosine_family_is_strongly_concave():
    spec = cosine(0.7)
    x = np.linspace(0, 1, 1001)
    assert spec.h(0.0) == pytest.approx(0.0, abs=1e-15)
    assert spec.h(1.0) == pytest.approx(0.0, abs=1e-14)
    assert np.max(spec.d2h(x)) < 0
    # derivatives agree with finite differences
    h = 1e-6
    np.testing.assert_allclose((spec.h(x[1:-1] + h) - spec.h(x[1:-1] - h)) / (2 * h), spec.dh(x[1:-1]), atol=1e-8)


def test_ceil_height_snaps_rounding_noise():
    assert ceil_height(3.0 + 1e-12) == 3
    assert ceil_height(2.5) == 3
    assert ceil_height(-0.0) == 0


def test_gaussian_schedule_is_exact():
    beta, c, n = 1.7, 0.6, 50
    prof = discretize(quadratic(c), n)
    sch = tilt_schedule(gaussian(beta), prof)
    np.testing.assert_allclose(sch.gamma[1:], prof.delta[1:] / beta, rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(sch.alpha[1:n], 2 * c / beta, rtol=1e-9)


def test_schedule_n2_has_one_alpha():
    prof = discretize(quadratic(0.5), 2)
    sch = tilt_schedule(uniform3(), prof)
    inner = sch.alpha[1:2]
    assert inner.size == 1
    assert inner[0] == pytest.approx(2 * (sch.gamma[1] - sch.gamma[2]))
    assert np.isnan(sch.alpha[0]) and np.isnan(sch.alpha[2])


def test_schedule_monotone_and_positive():
    for law, spec in [(uniform3(), quadratic(0.5)), (lazy_srw(0.5), cosine(0.5)), (uniform3(), cosine(0.8))]:
        for n in (16, 128, 1024):
            sch = tilt_schedule(law, discretize(spec, n))
            assert np.all(np.diff(sch.gamma[1:]) < 0)
            assert np.all(sch.alpha[1:n] > 0)
            assert sch.alpha_bounds[0] > 0


def test_alpha_approaches_limit():
    law, spec = uniform3(), quadratic(0.5)
    errs = []
    for n in (64, 256, 1024):
        sch = tilt_schedule(law, discretize(spec, n))
        k = np.arange(1, n)
        errs.append(np.max(np.abs(sch.alpha[1:n] - limiting_alpha(law, spec, k / n))))
    assert errs[0] < 0.05
    assert errs[0] > errs[1] > errs[2]


def test_alpha_gaps_halve_when_n_doubles():
    law, spec = uniform3(), quadratic(0.5)
    gaps = []
    for n in (256, 512):
        a = tilt_schedule(law, discretize(spec, n)).alpha
        # gap between neighbours at the same macroscopic time x = 1/4
        k = n // 4
        gaps.append(abs(a[k] - a[k + 1]))
    assert 0.3 <= gaps[1] / gaps[0] <= 0.7


def test_ld_exponents_differ_by_bounded_amount():
    diffs = []
    for law in (gaussian(1.0), uniform3()):
        for n in (64, 256, 1024, 4096):
            sch = tilt_schedule(law, discretize(quadratic(0.5), n))
            diffs.append((n, abs(sch.ld_exponent_sum - sch.ld_exponent_integral)))
    d = np.array([v for _, v in diffs]).reshape(2, 4)
    # growth slower than n^0.1 over a factor 64 in n
    assert np.all(d[:, -1] <= d[:, 0] * 64**0.1 + 1e-9)


def test_too_steep_obstacle_names_step():
    with pytest.raises(SlopeError, match="k=1"):
        tilt_schedule(uniform3(), discretize(quadratic(1.2), 20))


def test_slope_margin_is_respected():
    law = two_sided_geometric(0.5)  # cumulant finite on (-ln 2, ln 2)
    c = float(cumulant_derivatives(law, 0.5)[0])
    prof = discretize(quadratic(c), 40)
    tilt_schedule(law, prof, margin=1e-6)
    with pytest.raises(SlopeError):
        tilt_schedule(law, prof, margin=0.3)


def test_p_obstacle_not_discretised_here():
    with pytest.raises(ValueError):
        discretize(obstacle_from_name("p", 2.0), 10)
    with pytest.raises(ValueError):
        discretize(quadratic(0.5), 1)
    assert math.isnan(discretize(quadratic(0.5), 4).delta[0])
