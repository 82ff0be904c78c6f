import math
import random
from fractions import Fraction

import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from seqevl.invariant_measure import (StationaryConvergenceError, UlamOperator, default_n_terms, orbit_of_one,
                                      parry_density, parry_density_eval, parry_measure_interval, threshold_schedule,
                                      ulam_discretize, ulam_stationary, density_l1_distance)
from seqevl.observables import Observable

GOLDEN = "(1+sqrt(5))/2"


def golden_plateaus():
    """Closed form: orbit of 1 is (1, 1/b, 0), so h = (1 + 1/b)/M on [0, 1/b) and 1/M after."""
    b = (1 + sympy.sqrt(5)) / 2
    M = 1 + 1 / b**2
    return float((1 + 1 / b) / M), float(1 / M), float(1 / b)


def test_doubling_density_is_uniform():
    for x in (0.0, 0.3, 0.99):
        assert parry_density_eval(2, x) == 1.0


def test_golden_density_against_closed_form():
    c1, c2, inv = golden_plateaus()
    assert c1 == pytest.approx(1.17082, abs=1e-5) and c2 == pytest.approx(0.72361, abs=1e-5)
    assert parry_density_eval(GOLDEN, 0.3) == pytest.approx(c1, abs=1e-12)
    assert parry_density_eval(GOLDEN, 0.8) == pytest.approx(c2, abs=1e-12)
    assert parry_measure_interval(GOLDEN, 0, inv) == pytest.approx(c1 * inv, abs=1e-12)
    assert parry_measure_interval(GOLDEN, 0, inv) == pytest.approx(0.72361, abs=1e-5)


def test_measure_examples():
    assert parry_measure_interval(2, 0.2, 0.5) == pytest.approx(0.3)
    assert parry_measure_interval("5/2", 0.4, 0.4) == 0
    with pytest.raises(ValueError):
        parry_measure_interval(2, 0.5, 0.2)


def test_orbit_of_one_endings():
    assert orbit_of_one(Fraction(2), 10).ending == "zero"
    o = orbit_of_one(Fraction(5, 2), 50)
    assert o.ending in ("truncated", "cycle")
    assert orbit_of_one(parse_golden(), 10).ending == "zero"


def parse_golden():
    from seqevl._reals import parse_real
    return parse_real(GOLDEN)


def test_five_halves_orbit_of_one_avoids_zero():
    # independent exact orbit: 1 -> 1/2 -> 1/4 -> 5/8 -> ...
    x = sympy.Rational(1)
    b = sympy.Rational(5, 2)
    x = b - sympy.floor(b)
    for _ in range(200):
        assert x != 0
        x = b * x - sympy.floor(b * x)


@settings(max_examples=200)
@given(st.floats(1.1, 4.0))
def test_parry_normalisation(beta):
    d = parry_density(beta, n_terms=60)
    assert d.cdf(1.0) == pytest.approx(1.0, abs=1e-8)
    assert np.all(d(np.linspace(0, 0.999, 101)) >= 1 / d.M_beta - 1e-12)


def _preimage_measure(d, beta, a, b):
    total = 0.0
    for k in range(math.ceil(beta)):
        lo, hi = (a + k) / beta, min((b + k) / beta, 1.0)
        if lo < 1:
            total += d.measure(lo, hi)
    return total


def test_parry_invariance():
    rng = random.Random(2)
    for _ in range(50):
        beta = rng.uniform(1.1, 4.0)
        d = parry_density(beta)
        a = rng.random()
        b = rng.uniform(a, 1)
        assert _preimage_measure(d, beta, a, b) == pytest.approx(d.measure(a, b), abs=1e-6)


def test_truncation_bound_is_met_by_default_terms():
    d = parry_density(math.pi)
    assert d.truncation_error <= 1e-15 or d.exact
    assert default_n_terms(math.pi) >= 30


def test_threshold_examples():
    s = threshold_schedule(2, Observable(zeta="1/3"), 1.0, 100)
    assert s.delta_n == pytest.approx(0.005, rel=1e-12)
    assert s.u_n == pytest.approx(5.29832, abs=1e-5)
    assert threshold_schedule(2, Observable(zeta="1/3"), 0.0, 100).delta_n == 0
    g = threshold_schedule(GOLDEN, Observable(zeta=0.3), 2.0, 1000)
    c1, _, _ = golden_plateaus()
    assert g.delta_n == pytest.approx((2 / 1000) / (2 * c1), rel=1e-9)
    assert g.delta_n == pytest.approx(8.5410e-4, abs=1e-8)


def test_threshold_rejects_impossible_mass():
    with pytest.raises(ValueError):
        threshold_schedule(2, Observable(zeta="1/3"), 5.0, 2)


def test_threshold_straddling_breakpoint_uses_exact_integral():
    d = parry_density(GOLDEN)
    s = threshold_schedule(GOLDEN, Observable(zeta="0"), 1.0, 50)
    assert 50 * d.ball_measure(0.0, s.delta_n) == pytest.approx(1.0, rel=1e-9)


@settings(max_examples=50)
@given(st.sampled_from([2, "5/2", GOLDEN, 3.3, "sqrt(7)"]), st.floats(0, 0.999), st.floats(0.01, 5.0),
       st.integers(10, 10**6))
def test_threshold_consistency(beta, zeta, tau, n):
    s = threshold_schedule(beta, Observable(zeta=zeta), tau, n)
    assert n * parry_density(beta).ball_measure(zeta, s.delta_n) == pytest.approx(tau, rel=1e-9)


# --- Ulam -------------------------------------------------------------------

def test_ulam_doubling_four_bins():
    P = ulam_discretize(2, 4).toarray()
    expected = np.array([[.5, .5, 0, 0], [0, 0, .5, .5], [.5, .5, 0, 0], [0, 0, .5, .5]])
    assert np.array_equal(P, expected)
    assert np.allclose(ulam_stationary(ulam_discretize(2, 4)).density, 1.0)


def _ulam_by_sampling(beta, n_bins, m=20000):
    P = np.zeros((n_bins, n_bins))
    for i in range(n_bins):
        x = (i + (np.arange(m) + 0.5) / m) / n_bins
        y = beta * x % 1.0
        P[i] = np.bincount(np.minimum((y * n_bins).astype(int), n_bins - 1), minlength=n_bins) / m
    return P


@pytest.mark.parametrize("beta", [2.5, 1.618, 3.7])
def test_ulam_matches_sampled_geometry(beta):
    P = ulam_discretize(beta, 16).toarray()
    assert np.abs(P - _ulam_by_sampling(beta, 16)).max() < 2e-3
    assert np.allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert P.min() >= 0


def test_ulam_golden_converges_to_parry():
    d = parry_density(GOLDEN)
    errs = [density_l1_distance(ulam_stationary(ulam_discretize(GOLDEN, 2**k)).density, d) for k in range(8, 13)]
    assert errs[-1] <= 1e-2
    assert all(b <= a + 1e-4 for a, b in zip(errs, errs[1:]))


def test_identity_operator_flagged_not_unique():
    import scipy.sparse as sp
    op = UlamOperator(2.0, 8, sp.identity(8, format="csr"))
    res = ulam_stationary(op)
    assert np.allclose(res.density, 1.0)
    assert not res.unique


def test_non_convergence_raises_with_residual():
    import scipy.sparse as sp
    # transient state feeding a 2-cycle: the iterates from uniform oscillate forever
    P = sp.csr_matrix(np.array([[0, 1.0, 0], [0, 0, 1.0], [0, 1.0, 0]]))
    op = UlamOperator(2.0, 3, P)
    with pytest.raises(StationaryConvergenceError) as exc:
        ulam_stationary(op, max_iter=50)
    assert exc.value.residual > 0
