"""Phase classification, Malthusian growth rate and the limit fitness measure."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fitness import FitnessDistribution, expect_singular


@dataclass(frozen=True)
class ModelParams:
    """Innovation probability ``beta``, reinforcement probability ``gamma`` and fitness law."""

    beta: float
    gamma: float
    dist: FitnessDistribution

    def __post_init__(self):
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "gamma", float(self.gamma))
        b, g = self.beta, self.gamma
        if not (0.0 < b <= 1.0):
            raise ValueError(f"beta must lie in (0, 1], got {b}")
        if not (0.0 < g <= 1.0):
            raise ValueError(f"gamma must lie in (0, 1], got {g}")
        if b + g < 1.0 - 1e-12:
            raise ValueError(f"beta + gamma must be >= 1, got {b + g}")

    @property
    def event_probabilities(self) -> tuple[float, float, float]:
        """Probabilities of (both, new_family_only, reinforce_only)."""
        return (
            max(self.beta + self.gamma - 1.0, 0.0),
            1.0 - self.gamma,
            1.0 - self.beta,
        )

    def to_json(self) -> dict:
        return {"beta": self.beta, "gamma": self.gamma, "fitness": self.dist.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "ModelParams":
        return cls(float(obj["beta"]), float(obj["gamma"]),
                   FitnessDistribution.from_json(obj["fitness"]))


@dataclass(frozen=True)
class MalthusResult:
    lambda_star: float
    condensing: bool
    criterion_value: float
    boundary: bool = False
    residual: float = 0.0


@dataclass(frozen=True)
class LimitMeasure:
    """Limit ``pi`` of the empirical fitness distribution.

    ``bulk_density_factor`` is the density of the absolutely continuous part
    with respect to ``mu``; ``condensate_mass`` sits at fitness one.
    """

    bulk_density_factor: Callable
    condensate_mass: float
    params: ModelParams
    lambda_star: float

    def bulk_mass(self, integrand: str = "identity") -> float:
        """Integral of ``bulk_density_factor`` (``identity``) or of ``x * factor`` (``mean``)."""
        return _bulk_integral(self, integrand)

    def total_mass(self) -> float:
        return self.bulk_mass() + self.condensate_mass


def _g(params: ModelParams, lam: float) -> float:
    share = params.beta / (params.beta + params.gamma)
    return share * expect_singular(params.dist, "lambda_over_lambda_minus_gx",
                                   lam=lam, gamma=params.gamma)


def check_condensation(params: ModelParams) -> tuple[bool, float]:
    """Return ``(condensing, criterion_value)`` for the condensation criterion.

    The criterion value is ``beta/(beta+gamma) * E[1/(1-F)]``; condensation
    holds when it is strictly below one.  A divergent integral gives ``inf``.
    """
    share = params.beta / (params.beta + params.gamma)
    value = share * expect_singular(params.dist, "one_over_1mx")
    return bool(value < 1.0), value


def solve_lambda_star(params: ModelParams, tol: float = 1e-12,
                      max_iter: int = 200) -> MalthusResult:
    """Malthusian parameter by bisection on ``g(lam) = 1`` over ``(gamma, beta + gamma)``.

    ``g`` is strictly decreasing there, may be infinite at ``gamma`` and
    always lies below one at ``beta + gamma``.  In the condensation phase,
    and on the boundary where the criterion equals one, ``lambda_star`` is
    ``gamma``.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    condensing, value = check_condensation(params)
    gamma = params.gamma
    if value <= 1.0:
        return MalthusResult(gamma, condensing, value, boundary=(value == 1.0))

    lo = gamma * (1.0 + 1e-12)
    hi = params.beta + gamma - 1e-12
    g_lo, g_hi = _g(params, lo) - 1.0, _g(params, hi) - 1.0
    if not (g_lo > 0.0 and g_hi < 0.0):
        raise ArithmeticError(
            f"root of g(lambda) = 1 not bracketed: g(lo)-1={g_lo}, g(hi)-1={g_hi}"
        )
    mid = 0.5 * (lo + hi)
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        g_mid = _g(params, mid) - 1.0
        if g_mid == 0.0 or (hi - lo) <= 4 * np.finfo(float).eps * mid:
            break
        if g_mid > 0.0:
            lo = mid
        else:
            hi = mid
    residual = abs(_g(params, mid) - 1.0)
    if residual > max(tol, 1e-10):
        raise ArithmeticError(f"bisection stalled with residual {residual}")
    return MalthusResult(mid, False, value, residual=residual)


def limit_measure(params: ModelParams, mr: MalthusResult) -> LimitMeasure:
    share = params.beta / (params.beta + params.gamma)
    if mr.condensing:
        factor = lambda x: share / (1.0 - np.asarray(x, dtype=float))
        omega = 1.0 - mr.criterion_value
    else:
        lam, g = mr.lambda_star, params.gamma
        factor = lambda x: share * lam / (lam - g * np.asarray(x, dtype=float))
        omega = 0.0
    return LimitMeasure(factor, omega, params, mr.lambda_star)


def _bulk_integral(lm: LimitMeasure, what: str) -> float:
    p = lm.params
    share = p.beta / (p.beta + p.gamma)
    lam, g = lm.lambda_star, p.gamma
    if what == "identity":
        if lm.condensate_mass > 0:
            return share * expect_singular(p.dist, "one_over_1mx")
        return share * expect_singular(p.dist, "lambda_over_lambda_minus_gx",
                                       lam=lam, gamma=g)
    if what == "mean":
        # x * lam/(lam - g x) = (lam/g) * (lam/(lam - g x) - 1)
        if lm.condensate_mass > 0:
            return share * expect_singular(p.dist, "x_over_1mx")
        inner = expect_singular(p.dist, "lambda_over_lambda_minus_gx", lam=lam, gamma=g)
        return share * (lam / g) * (inner - 1.0)
    raise ValueError(f"unknown bulk integral {what!r}")


def limit_mean_fitness(params: ModelParams, mr: MalthusResult) -> float:
    """Almost-sure limit ``lambda_star / (beta + gamma)`` of the mean fitness."""
    return mr.lambda_star / (params.beta + params.gamma)


def summary(params: ModelParams) -> dict:
    """Everything the ``check`` subcommand prints."""
    mr = solve_lambda_star(params)
    lm = limit_measure(params, mr)
    crit = mr.criterion_value
    return {
        "condensing": mr.condensing,
        "criterion_value": crit if math.isfinite(crit) else "inf",
        "lambda_star": mr.lambda_star,
        "omega": lm.condensate_mass,
        "limit_mean": limit_mean_fitness(params, mr),
        "boundary": mr.boundary,
    }
