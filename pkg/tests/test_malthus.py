import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hs

from rbpsim.fitness import FitnessDistribution as FD, expect_singular
from rbpsim.malthus import (
    ModelParams,
    check_condensation,
    limit_mean_fitness,
    limit_measure,
    solve_lambda_star,
    summary,
)

from oracles import bisect_root, uniform_lambda_star

FIG1 = ModelParams(1, 1, FD.power_tail(3))
HALF = ModelParams(1, 1, FD.discrete([[0.5, 1.0]]))
UNIF = ModelParams(1, 1, FD.power_tail(1))


def test_check_condensation_examples():
    assert check_condensation(FIG1) == (True, pytest.approx(0.75, rel=1e-12))
    assert check_condensation(HALF) == (False, 1.0)
    assert check_condensation(UNIF) == (False, math.inf)


def test_lambda_star_examples():
    r = solve_lambda_star(HALF)
    assert r.lambda_star == 1.0 and r.boundary and not r.condensing
    r = solve_lambda_star(FIG1)
    assert r.lambda_star == 1.0 and r.condensing
    r = solve_lambda_star(UNIF)
    assert r.lambda_star == pytest.approx(uniform_lambda_star(), abs=1e-10)
    assert r.lambda_star == pytest.approx(1.2550, abs=1e-4)


def test_limit_measure_examples():
    lm = limit_measure(FIG1, solve_lambda_star(FIG1))
    assert lm.condensate_mass == pytest.approx(0.25, rel=1e-12)
    for x in (0.0, 0.3, 0.9):
        # density of the bulk: factor * 3 (1-x)^2 = (3/2)(1-x)
        assert lm.bulk_density_factor(x) * 3 * (1 - x) ** 2 == pytest.approx(1.5 * (1 - x))
    lm = limit_measure(HALF, solve_lambda_star(HALF))
    assert lm.condensate_mass == 0.0
    assert lm.bulk_density_factor(0.5) == pytest.approx(1.0)


def test_limit_mean_examples():
    assert limit_mean_fitness(FIG1, solve_lambda_star(FIG1)) == 0.5
    u = limit_mean_fitness(UNIF, solve_lambda_star(UNIF))
    assert u == pytest.approx(uniform_lambda_star() / 2, abs=1e-10)
    p = ModelParams(0.5, 0.5, FD.power_tail(3))
    assert limit_mean_fitness(p, solve_lambda_star(p)) == 0.5


@pytest.mark.parametrize("b,g", [(0.3, 0.5), (1.2, 1.0), (0.0, 1.0), (1.0, 0.0)])
def test_invalid_params(b, g):
    with pytest.raises(ValueError):
        ModelParams(b, g, FD.power_tail(3))


PRESET_DISTS = [FD.power_tail(3), FD.power_tail(1), FD.power_tail(2.5), FD.beta(2, 1.5),
                FD.beta(0.7, 3.0), FD.discrete([[0.5, 1.0]]),
                FD.discrete([[0.3, 0.4], [0.8, 0.6]]),
                FD.piecewise_density([0.0, 0.5, 1.0], [[1.0], [12.0, -24.0, 12.0]])]


@pytest.mark.parametrize("dist", PRESET_DISTS, ids=lambda d: d.kind)
@pytest.mark.parametrize("bg", [(1.0, 1.0), (0.7, 0.6), (0.4, 0.6), (0.9, 0.3)])
def test_total_mass_and_mean_identity(dist, bg):
    p = ModelParams(*bg, dist)
    mr = solve_lambda_star(p)
    lm = limit_measure(p, mr)
    assert lm.total_mass() == pytest.approx(1.0, abs=1e-8)
    assert (lm.condensate_mass > 0) == mr.condensing
    mean = lm.bulk_mass("mean") + lm.condensate_mass
    assert mean == pytest.approx(limit_mean_fitness(p, mr), abs=1e-8)
    assert p.gamma <= mr.lambda_star < p.beta + p.gamma


@pytest.mark.parametrize("dist", [FD.power_tail(1), FD.beta(2, 1.5), FD.power_tail(1.5)],
                         ids=["unif", "beta", "pt1.5"])
def test_fixed_point_residual_and_oracle(dist):
    p = ModelParams(0.8, 0.9, dist)
    mr = solve_lambda_star(p)
    assert not mr.condensing

    def g(lam):
        return p.beta / (p.beta + p.gamma) * expect_singular(
            dist, "lambda_over_lambda_minus_gx", lam=lam, gamma=p.gamma, method="quadrature") - 1

    assert abs(g(mr.lambda_star)) <= 1e-10
    ref = bisect_root(g, p.gamma * (1 + 1e-12), p.beta + p.gamma - 1e-12)
    assert mr.lambda_star == pytest.approx(ref, abs=1e-9)


def test_lambda_star_monotone_in_beta():
    for dist in (FD.power_tail(1), FD.beta(2, 1.5)):
        lams = [solve_lambda_star(ModelParams(b, 0.9, dist)).lambda_star
                for b in np.linspace(0.2, 1.0, 9)]
        assert all(y >= x - 1e-12 for x, y in zip(lams, lams[1:]))


@settings(max_examples=30, deadline=None)
@given(beta=hs.floats(0.05, 1.0), gamma=hs.floats(0.05, 1.0), alpha=hs.floats(1.05, 5.0))
def test_phase_and_range_property(beta, gamma, alpha):
    if beta + gamma < 1:
        return
    p = ModelParams(beta, gamma, FD.power_tail(alpha))
    mr = solve_lambda_star(p)
    crit = beta / (beta + gamma) * alpha / (alpha - 1)
    assert mr.condensing == (crit < 1)
    assert gamma <= mr.lambda_star < beta + gamma
    if mr.condensing:
        assert mr.lambda_star == gamma
        assert limit_measure(p, mr).condensate_mass == pytest.approx(1 - crit, abs=1e-12)


def test_summary_fields():
    s = summary(UNIF)
    assert s["criterion_value"] == "inf"
    assert not s["condensing"] and s["omega"] == 0.0
    s = summary(FIG1)
    assert s["omega"] == pytest.approx(0.25) and s["limit_mean"] == 0.5


def test_params_json_round_trip():
    p = ModelParams(0.7, 0.6, FD.beta(2, 3))
    assert ModelParams.from_json(p.to_json()) == p
    assert p.event_probabilities == pytest.approx((0.3, 0.4, 0.3))
