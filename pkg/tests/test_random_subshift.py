import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqevl.random_subshift import (SubshiftSpec, SubshiftValidationError, QuenchedRealization, cylinder_psi,
                                    horizon_w, marginal_cylinder_measure, minimal_period, periodic_word,
                                    quenched_concentration, quenched_evl_experiment, sample_measure_cylinder,
                                    sample_omega, second_eigenvalue_modulus, stationary_vector, subshift_theta)

P = np.array([[0.3, 0.7], [0.6, 0.4]])
A1 = np.array([[0.2, 0.8], [0.5, 0.5]])
A2 = np.array([[0.6, 0.4], [0.3, 0.7]])
MIXED = SubshiftSpec([A1, A2], [0.5, 0.5])
THREE = SubshiftSpec([np.array([[0.5, 0.3, 0.2], [0.1, 0.6, 0.3], [0.4, 0.4, 0.2]]),
                      np.array([[0.2, 0.2, 0.6], [0.3, 0.3, 0.4], [0.25, 0.5, 0.25]])], [0.3, 0.7])


def test_validation():
    with pytest.raises(SubshiftValidationError):
        SubshiftSpec([np.array([[1.0, 0.0], [0.5, 0.5]])])          # p00 = 1, zero entry
    with pytest.raises(SubshiftValidationError):
        SubshiftSpec([np.array([[0.5, 0.6], [0.5, 0.5]])])          # row sum
    with pytest.raises(SubshiftValidationError):
        SubshiftSpec([P], m_floor=0.35)                             # entry below floor
    with pytest.raises(SubshiftValidationError):
        SubshiftSpec([P, A1], [0.3, 0.3])
    with pytest.raises(SubshiftValidationError):
        SubshiftSpec([np.array([[1.0]])])
    with pytest.raises(SubshiftValidationError):
        SubshiftSpec([P, np.ones((3, 3)) / 3])
    spec = SubshiftSpec([P])
    assert spec.degenerate and spec.m_floor == 0.3 and spec.h0 == pytest.approx(-math.log(0.3))
    assert MIXED.probabilities == (0.5, 0.5)


def test_stationary_vector():
    pi = stationary_vector(P)
    assert pi @ P == pytest.approx(pi, abs=1e-14)
    assert pi == pytest.approx([6 / 13, 7 / 13], abs=1e-14)


def test_sample_omega():
    real = sample_omega(SubshiftSpec([P]), 50, seed=3)
    assert np.all(real.omega == 0)
    a, b = sample_omega(MIXED, 1000, 9), sample_omega(MIXED, 1000, 9)
    assert np.array_equal(a.omega, b.omega)
    assert not np.array_equal(a.omega, sample_omega(MIXED, 1000, 10).omega)
    with pytest.raises(ValueError):
        sample_omega(MIXED, 0, 1)


def test_driver_frequency():
    N = 100_000
    f = (sample_omega(MIXED, N, 1).omega == 0).mean()
    assert abs(f - 0.5) <= 3 * math.sqrt(0.25 / N)


def test_cylinder_examples():
    real = sample_omega(SubshiftSpec([P]), 20, 0)
    pi = real.pi0
    for n in (1, 4, 9):
        assert sample_measure_cylinder(real, [0] * n) == pytest.approx(pi[0] * 0.3 ** (n - 1), rel=1e-14)
    assert [sample_measure_cylinder(real, [a]) for a in (0, 1)] == pytest.approx(list(pi))
    with pytest.raises(ValueError):
        sample_measure_cylinder(real, [0, 2])


def _brute_cylinder(real, word):
    # sum over paths, written independently of the product formula
    total = 0.0
    for path in itertools.product(range(real.spec.alphabet_size), repeat=len(word)):
        if list(path) != list(word):
            continue
        p = real.pi0[path[0]]
        for i in range(len(path) - 1):
            p *= real.spec.matrices[real.omega[i]][path[i], path[i + 1]]
        total += p
    return total


@settings(max_examples=60)
@given(st.lists(st.integers(0, 2), min_size=1, max_size=7), st.integers(0, 1000))
def test_cylinder_consistency_and_quasi_invariance(word, seed):
    real = sample_omega(THREE, 12, seed)
    mu = sample_measure_cylinder(real, word)
    assert mu == pytest.approx(_brute_cylinder(real, word), rel=1e-12)
    ext = sum(sample_measure_cylinder(real, word + [a]) for a in range(3))
    assert abs(ext - mu) <= 1e-12
    # pushing the sample measure one step forward gives the next fibre's measure
    pushed = sum(sample_measure_cylinder(real, [a] + word) for a in range(3))
    assert abs(pushed - sample_measure_cylinder(real.shifted(1), word)) <= 1e-12


def test_full_measure():
    real = sample_omega(THREE, 6, 4)
    tot = sum(sample_measure_cylinder(real, list(w)) for w in itertools.product(range(3), repeat=5))
    assert tot == pytest.approx(1.0, abs=1e-13)


def test_period_helpers():
    assert periodic_word([0, 1], 5) == [0, 1, 0, 1, 0]
    assert minimal_period([0, 1, 0, 1]) == 2 and minimal_period([0, 0, 0]) == 1 and minimal_period([0, 1, 1]) == 3


def test_theta_examples():
    spec = SubshiftSpec([P])
    assert subshift_theta(spec, [0]) == pytest.approx(0.7, abs=1e-15)
    assert subshift_theta(spec, [0, 1]) == pytest.approx(1 - 0.7 * 0.6, abs=1e-15)
    assert subshift_theta(spec, [0, 0, 0]) == pytest.approx(0.7, abs=1e-15)


def test_theta_ratio_constant_for_degenerate_driver():
    spec = SubshiftSpec([P])
    real = sample_omega(spec, 50, 0)
    for period in ([0], [0, 1], [1, 1, 0]):
        p = len(period)
        th = subshift_theta(spec, period)
        for n in range(p, 20, p):
            w = periodic_word(period, n + p)
            r = 1 - sample_measure_cylinder(real, w) / sample_measure_cylinder(real, w[:n])
            assert r == pytest.approx(th, abs=1e-12)


def test_mixed_theta_settles():
    th = subshift_theta(MIXED, [0])
    A = MIXED.average_matrix
    assert th == pytest.approx(1 - A[0, 0], abs=1e-12)
    with pytest.raises(ArithmeticError):
        subshift_theta(MIXED, [0, 1], max_steps=1)


def test_tau_zero_and_validation():
    r = quenched_evl_experiment(SubshiftSpec([P]), [0], 8, 0.0, 100, 1)
    assert r.P_hat == 1.0
    with pytest.raises(ValueError):
        quenched_evl_experiment(SubshiftSpec([P]), [0], 0, 1.0, 100, 1)


def test_horizon_w():
    spec = SubshiftSpec([P])
    mu = marginal_cylinder_measure(spec, [0] * 8)
    assert horizon_w(spec, [0] * 8, 1.0) == math.floor(1 / mu)


def test_quenched_degenerate_experiment():
    spec = SubshiftSpec([P])
    r = quenched_evl_experiment(spec, [0], 8, 1.0, 20_000, seed=0)
    assert r.target == pytest.approx(math.exp(-0.7))
    assert abs(r.P_hat - r.target) <= 0.02
    again = quenched_evl_experiment(spec, [0], 8, 1.0, 20_000, seed=0)
    assert again == r


def test_quenched_concentration_small():
    c = quenched_concentration(MIXED, [0], 8, 1.0, 2000, 4, seed=1)
    assert len(c.results) == 4
    assert len({r.omega_seed for r in c.results}) == 4
    assert c.ratio <= 2.0


def test_psi_decay():
    spec = SubshiftSpec([P])
    lam = second_eigenvalue_modulus(P)
    assert lam == pytest.approx(0.3)
    exact = cylinder_psi(spec, range(1, 8))
    assert exact.rate == pytest.approx(lam, rel=1e-6)
    sampled = cylinder_psi(spec, range(1, 8), sample_length=400_000, seed=2)
    assert sampled.rate is not None and sampled.rate <= lam + 0.1
