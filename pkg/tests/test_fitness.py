import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs

from rbpsim.fitness import (
    FitnessDistribution as FD,
    expect_singular,
    from_uniform,
    n_of_t,
    quantile,
    sample,
    shell_integrate,
    tail_mass,
)

PT3 = FD.power_tail(3)
UNIF = FD.power_tail(1)
HALF = FD.discrete([[0.5, 1.0]])


def test_inverse_cdf_examples():
    assert from_uniform(PT3, 0.125) == pytest.approx(0.5, abs=1e-15)
    u = np.linspace(0.01, 0.99, 11)
    np.testing.assert_allclose(from_uniform(UNIF, u), 1 - u)


def test_point_mass_always_same():
    rng = np.random.default_rng(0)
    assert np.all(sample(HALF, rng, 100) == 0.5)
    assert sample(HALF, rng) == 0.5


def test_tail_mass_examples():
    assert tail_mass(PT3, 0.1) == pytest.approx(1e-3, rel=1e-14)
    assert tail_mass(PT3, 1.0) == 1.0
    assert tail_mass(HALF, 0.4) == 0.0


@pytest.mark.parametrize("eps", [0.0, -0.1, 1.5])
def test_tail_mass_rejects_bad_eps(eps):
    with pytest.raises(ValueError):
        tail_mass(PT3, eps)


def test_n_of_t_examples():
    assert n_of_t(PT3, 10) == 1000
    assert n_of_t(PT3, 100) == 10**6
    assert n_of_t(UNIF, 7.5) == 8


def test_n_of_t_undefined_for_discrete_far_from_one():
    with pytest.raises(ValueError, match="undefined"):
        n_of_t(HALF, 10)


def test_expect_singular_examples():
    assert expect_singular(HALF, "one_over_1mx") == 2.0
    assert expect_singular(PT3, "one_over_1mx") == pytest.approx(1.5, rel=1e-12)
    assert expect_singular(PT3, "one_over_1mx", method="quadrature") == pytest.approx(1.5, rel=1e-10)
    assert expect_singular(UNIF, "one_over_1mx") == math.inf
    assert expect_singular(UNIF, "one_over_1mx", method="quadrature") == math.inf


def test_lambda_below_gamma_rejected():
    with pytest.raises(ValueError):
        expect_singular(PT3, "lambda_over_lambda_minus_gx", lam=0.5, gamma=1.0)


@pytest.mark.parametrize("eps", [0.5, 0.2, 0.1])
def test_sample_tail_consistency(eps):
    n = 10**6
    x = sample(PT3, np.random.default_rng(42), n)
    p = eps**3
    frac = np.mean(x > 1 - eps)
    assert abs(frac - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_samples_open_interval():
    x = sample(FD.power_tail(0.05), np.random.default_rng(1), 10**5)
    assert np.all((x > 0) & (x < 1))


@pytest.mark.parametrize("alpha", [2.0, 3.0, 4.0])
def test_quadrature_matches_closed_form(alpha):
    d = FD.power_tail(alpha)
    exact = {
        "one_over_1mx": alpha / (alpha - 1),
        "x_over_1mx": 1 / (alpha - 1),
        "identity_x": 1 / (alpha + 1),
    }
    for name, val in exact.items():
        q = expect_singular(d, name, method="quadrature")
        assert q == pytest.approx(val, rel=1e-10)
        assert expect_singular(d, name, method="closed_form") == pytest.approx(val, rel=1e-12)
    for lam in (1.01, 1.3, 1.9):
        q = expect_singular(d, "lambda_over_lambda_minus_gx", lam=lam, gamma=1.0, method="quadrature")
        c = expect_singular(d, "lambda_over_lambda_minus_gx", lam=lam, gamma=1.0, method="closed_form")
        assert q == pytest.approx(c, rel=1e-10)


def test_uniform_lambda_integral_is_log():
    for lam in (1.05, 1.25, 1.8):
        val = expect_singular(UNIF, "lambda_over_lambda_minus_gx", lam=lam, gamma=1.0,
                              method="quadrature")
        assert val == pytest.approx(lam * math.log(lam / (lam - 1)), rel=1e-10)


def test_lambda_down_to_gamma_limit():
    target = expect_singular(PT3, "one_over_1mx", method="quadrature")
    near = expect_singular(PT3, "lambda_over_lambda_minus_gx", lam=1 + 1e-9, gamma=1.0,
                           method="quadrature")
    assert near == pytest.approx(target, rel=1e-7)
    at = expect_singular(PT3, "lambda_over_lambda_minus_gx", lam=1.0, gamma=1.0)
    assert at == pytest.approx(target, rel=1e-12)


def test_discrete_sums_are_exact():
    d = FD.discrete([[0.25, 0.5], [0.75, 0.5]])
    assert expect_singular(d, "one_over_1mx") == pytest.approx(0.5 / 0.75 + 0.5 / 0.25)
    assert expect_singular(d, "identity_x") == pytest.approx(0.5)
    assert expect_singular(d, "lambda_over_lambda_minus_gx", lam=2.0, gamma=1.0) == \
        pytest.approx(0.5 * 2 / 1.75 + 0.5 * 2 / 1.25)


def test_beta_matches_power_tail():
    b = FD.beta(1.0, 3.0)
    for eps in (0.01, 0.3, 0.9):
        assert tail_mass(b, eps) == pytest.approx(tail_mass(PT3, eps), rel=1e-12)
    assert expect_singular(b, "one_over_1mx") == pytest.approx(1.5, rel=1e-12)


def test_beta_quadrature_vs_closed_form():
    b = FD.beta(2.0, 1.5)
    for name in ("one_over_1mx", "x_over_1mx", "identity_x"):
        assert expect_singular(b, name, method="quadrature") == \
            pytest.approx(expect_singular(b, name, method="closed_form"), rel=1e-10)


def test_piecewise_density():
    # density 1 on [0, 1/2), 12 (1 - x)^2 on [1/2, 1]; tail index 3
    d = FD.piecewise_density([0.0, 0.5, 1.0], [[1.0], [12.0, -24.0, 12.0]])
    assert d.alpha == 3.0
    assert tail_mass(d, 0.5) == pytest.approx(0.5, rel=1e-12)
    assert tail_mass(d, 0.1) == pytest.approx(4e-3, rel=1e-12)
    assert expect_singular(d, "one_over_1mx") == pytest.approx(math.log(2) + 1.5, rel=1e-9)
    x = sample(d, np.random.default_rng(3), 200_000)
    assert abs(np.mean(x < 0.5) - 0.5) < 0.005
    assert quantile(d, 0.5) == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("bad", [
    ([0.0, 1.0], [[2.0]]),            # integrates to 2
    ([0.0, 1.0], [[2.0, -4.0]]),      # negative
    ([0.1, 1.0], [[1 / 0.9]]),        # does not start at 0
])
def test_piecewise_validation(bad):
    with pytest.raises(ValueError):
        FD.piecewise_density(*bad)


@pytest.mark.parametrize("atoms", [[[1.0, 1.0]], [[0.0, 1.0]], [[0.5, 0.4]], [[0.5, -1], [0.6, 2]]])
def test_discrete_validation(atoms):
    with pytest.raises(ValueError):
        FD.discrete(atoms)


def test_json_round_trip():
    for d in (PT3, FD.beta(2, 3), HALF,
              FD.piecewise_density([0.0, 0.5, 1.0], [[1.0], [12.0, -24.0, 12.0]])):
        assert FD.from_json(d.to_json()) == d
    with pytest.raises(ValueError):
        FD.from_json({"kind": "lognormal"})


@settings(max_examples=50, deadline=None)
@given(alpha=hs.floats(0.2, 6.0), e1=hs.floats(1e-6, 1.0), e2=hs.floats(1e-6, 1.0))
def test_tail_mass_monotone(alpha, e1, e2):
    lo, hi = sorted((e1, e2))
    for d in (FD.power_tail(alpha), FD.beta(1.5, alpha)):
        if hi > lo * (1 + 1e-6):
            assert tail_mass(d, lo) < tail_mass(d, hi)


@settings(max_examples=40, deadline=None)
@given(alpha=hs.floats(1.2, 6.0), a=hs.floats(0.5, 4.0))
def test_beta_family_closed_form_vs_quadrature(alpha, a):
    d = FD.beta(a, alpha)
    q = expect_singular(d, "one_over_1mx", method="quadrature")
    assert q == pytest.approx((a + alpha - 1) / (alpha - 1), rel=1e-8)


def test_shell_integrate_divergence_and_convergence():
    assert shell_integrate(lambda u: 1 / u) == math.inf
    assert shell_integrate(lambda u: u**-0.5) == pytest.approx(2.0, rel=1e-10)
