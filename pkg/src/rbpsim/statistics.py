"""Observables of a snapshot and the limit laws they are compared with."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, special

from .engine import Snapshot


# ---------------------------------------------------------------------------
# empirical fitness distribution


@dataclass(frozen=True)
class EmpiricalFitness:
    bin_edges: np.ndarray
    masses: np.ndarray
    mean_fitness: float
    N: int
    top_shell: tuple[float, float] | None = None  # (lower edge, mass above it)


def default_bin_edges(n_bins: int = 200) -> np.ndarray:
    return np.linspace(0.0, 1.0, n_bins + 1)


def empirical_fitness(snapshot: Snapshot, bin_edges=None, top_shell_width: float | None = 10.0):
    """Size-weighted fitness histogram.

    Bin ``i`` collects families with fitness in ``[edges[i], edges[i+1])``;
    edges must cover [0, 1].  ``top_shell_width`` adds the mass of
    ``(1 - width/t, 1]`` so the condensate stays visible at fine scale.
    """
    edges = default_bin_edges() if bin_edges is None else np.asarray(bin_edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly increasing")
    if edges[0] > 0.0 or edges[-1] < 1.0:
        raise ValueError("bin edges must cover [0, 1]")
    if snapshot.M == 0 or snapshot.N == 0:
        raise ValueError("empty snapshot")
    f, z = snapshot.fitness, snapshot.size
    idx = np.clip(np.searchsorted(edges, f, side="right") - 1, 0, edges.size - 2)
    counts = np.bincount(idx, weights=z, minlength=edges.size - 1)
    masses = counts / snapshot.N
    mean = float(np.dot(f, z) / snapshot.N)
    shell = None
    if top_shell_width is not None and snapshot.time > top_shell_width:
        lo = 1.0 - top_shell_width / snapshot.time
        shell = (lo, float(z[f > lo].sum() / snapshot.N))
    return EmpiricalFitness(edges, masses, mean, snapshot.N, shell)


def mass_between(snapshot: Snapshot, lo: float, hi: float, closed_hi: bool = True) -> float:
    """``Xi_t([lo, hi])`` (or ``[lo, hi)``) straight from the snapshot."""
    f, z = snapshot.fitness, snapshot.size
    m = (f >= lo) & ((f <= hi) if closed_hi else (f < hi))
    return float(z[m].sum() / snapshot.N)


# ---------------------------------------------------------------------------
# rescaled point processes


class GammaPoints(NamedTuple):
    rel_birth: np.ndarray
    scaled_gap: np.ndarray
    scaled_size: np.ndarray


class PsiPoints(NamedTuple):
    rel_birth: np.ndarray
    scaled_gap: np.ndarray
    mart_scaled_size: np.ndarray


def _anchor(snapshot, T_of_t):
    T = snapshot.T_of_t if T_of_t is None else T_of_t
    if T is None:
        raise ValueError("window anchor T(t) not recorded for this snapshot")
    return float(T)


def window_scale(gamma: float, t: float, T: float) -> float:
    """``exp(-gamma (t - T))``; ``inf`` when ``T`` lies far beyond ``t``."""
    x = -gamma * (t - T)
    return math.exp(x) if x < 709.0 else math.inf


def gamma_points(snapshot: Snapshot, T_of_t: float | None, gamma: float) -> GammaPoints:
    """Points ``(tau_n - T, (t - tau_n)(1 - F_n), exp(-gamma (t - T)) Z_n)`` in family order."""
    T = _anchor(snapshot, T_of_t)
    t = snapshot.time
    tau = snapshot.birth_time
    return GammaPoints(
        tau - T,
        (t - tau) * (1.0 - snapshot.fitness),
        window_scale(gamma, t, T) * snapshot.size,
    )


def psi_points(snapshot: Snapshot, T_of_t: float | None, gamma: float) -> PsiPoints:
    """Like :func:`gamma_points` with per-family size scaling ``exp(-gamma F_n (t - tau_n))``.

    The third coordinate is the finite-time value of the family's Yule
    martingale, a proxy for its almost-sure limit.
    """
    T = _anchor(snapshot, T_of_t)
    t = snapshot.time
    tau = snapshot.birth_time
    f = snapshot.fitness
    return PsiPoints(tau - T, (t - tau) * (1.0 - f), np.exp(-gamma * f * (t - tau)) * snapshot.size)


def box_count(points, box) -> int:
    """Number of points in ``[s0, s1] x [f0, f1] x (z0, z1]``."""
    (s0, s1), (f0, f1), (z0, z1) = box
    a, b, c = points
    m = (a >= s0) & (a <= s1) & (b >= f0) & (b <= f1) & (c > z0) & (c <= z1)
    return int(np.count_nonzero(m))


# ---------------------------------------------------------------------------
# largest family


@dataclass(frozen=True)
class LargestFamilyRecord:
    index: int
    size: int
    fraction: float
    fitness: float
    birth_time: float
    rel_birth: float | None


def largest_family(snapshot: Snapshot, T_of_t: float | None = None, gamma: float | None = None):
    """Family of maximal size; ties go to the lowest (earliest founded) index."""
    if snapshot.M == 0:
        raise ValueError("empty snapshot")
    i = int(np.argmax(snapshot.size))
    T = snapshot.T_of_t if T_of_t is None else T_of_t
    tau = float(snapshot.birth_time[i])
    return LargestFamilyRecord(
        i, int(snapshot.size[i]), float(snapshot.size[i] / snapshot.N),
        float(snapshot.fitness[i]), tau, None if T is None else tau - T,
    )


# ---------------------------------------------------------------------------
# condensation wave


class WaveProfile(NamedTuple):
    x: np.ndarray
    empirical: np.ndarray
    conjectured: np.ndarray

    @property
    def linf(self) -> float:
        return float(np.max(np.abs(self.empirical - self.conjectured)))


def conjectured_wave(x, omega: float, alpha: float) -> np.ndarray:
    """``omega * P(Gamma(alpha + 1, 1) <= x)``."""
    x = np.asarray(x, dtype=float)
    return omega * special.gammainc(alpha + 1.0, np.maximum(x, 0.0))


def upper_tail_masses(snapshot: Snapshot, t: float | None, x_grid) -> np.ndarray:
    """``Xi_t(1 - x/t, 1)`` for every ``x`` in the grid."""
    t = snapshot.time if t is None else float(t)
    x = np.asarray(x_grid, dtype=float)
    gaps = t * (1.0 - snapshot.fitness)
    order = np.argsort(gaps, kind="stable")
    cum = np.concatenate(([0], np.cumsum(snapshot.size[order])))
    # families with t(1 - F) < x, i.e. F > 1 - x/t
    k = np.searchsorted(gaps[order], x, side="left")
    return cum[k] / snapshot.N


def wave_profile(snapshot: Snapshot, t: float | None, x_grid, omega: float, alpha: float):
    """Mass near the top at scale ``1/t`` next to the conjectured Gamma-shaped wave."""
    x = np.asarray(x_grid, dtype=float)
    return WaveProfile(x, upper_tail_masses(snapshot, t, x), conjectured_wave(x, omega, alpha))


# ---------------------------------------------------------------------------
# limit laws


@dataclass(frozen=True)
class LimitLaw:
    """Closed-form limit laws of the window observables.

    kind
        ``max_size_law``: CDF ``exp(-Lambda x**-eta)`` of the rescaled maximal
        family size.  ``fitness_gap_gamma``: Gamma(shape alpha, rate
        lambda_star) law of ``t (1 - V(t))``.  ``ppp_intensity``: the Poisson
        intensity of the rescaled point process.
    """

    kind: str
    alpha: float
    lambda_star: float
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("max_size_law", "fitness_gap_gamma", "ppp_intensity"):
            raise ValueError(f"unknown limit law {self.kind!r}")
        if not (self.alpha > 0 and self.lambda_star > 0 and self.gamma > 0):
            raise ValueError("alpha, lambda_star and gamma must be positive")

    @property
    def Lambda(self) -> float:
        a, lam, g = self.alpha, self.lambda_star, self.gamma
        return math.exp(special.gammaln(a + 1) + special.gammaln(1 + lam / g) - a * math.log(lam))

    @property
    def eta(self) -> float:
        return self.lambda_star / self.gamma

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "max_size_law":
            if np.any(x <= 0):
                raise ValueError("max-size law is supported on x > 0")
            return np.exp(-self.Lambda * x ** (-self.eta))
        if self.kind == "fitness_gap_gamma":
            return special.gammainc(self.alpha, self.lambda_star * np.maximum(x, 0.0))
        raise ValueError("the Poisson intensity has no CDF")

    def sample(self, rng: np.random.Generator, size=None):
        if self.kind == "max_size_law":
            w = rng.exponential(1.0 / self.Lambda, size)
            return w ** (-1.0 / self.eta)
        if self.kind == "fitness_gap_gamma":
            return rng.gamma(self.alpha, 1.0 / self.lambda_star, size)
        raise ValueError("the Poisson intensity cannot be sampled as a scalar law")

    def density(self, s, f, z):
        """Intensity of the limiting Poisson process at ``(s, f, z)``."""
        a, lam, g = self.alpha, self.lambda_star, self.gamma
        s, f, z = (np.asarray(v, dtype=float) for v in (s, f, z))
        v = np.exp(g * (s + f))
        return a * f ** (a - 1) * lam * np.exp(lam * s) * np.exp(-z * v) * v


def limit_law_cdf(law: LimitLaw, x):
    return law.cdf(x)


def limit_law_sample(law: LimitLaw, rng: np.random.Generator, size=None):
    return law.sample(rng, size)


def zeta_box(alpha: float, lambda_star: float, gamma: float, box) -> float:
    """Intensity mass of ``[s0, s1] x [f0, f1] x [z0, z1]``.

    The ``z`` integral is done exactly; the remaining ``(s, f)`` integral
    numerically.  ``s0 = -inf``, ``s1 = inf``, ``f1 = inf`` and ``z1 = inf``
    are allowed.
    """
    (s0, s1), (f0, f1), (z0, z1) = ((float(a), float(b)) for a, b in box)
    if s1 < s0 or f1 < f0 or z1 < z0 or f0 < 0 or z0 < 0:
        raise ValueError(f"malformed box {box}")
    if z0 == 0.0 and (math.isinf(s1) or math.isinf(f1)):
        raise ValueError("box reaching z = 0 must be bounded in s and f (mass is infinite)")
    if s0 == s1 or f0 == f1 or z0 == z1:
        return 0.0
    a, lam, g = float(alpha), float(lambda_star), float(gamma)

    def z_part(s, f):
        v = math.exp(g * (s + f)) if g * (s + f) < 700 else math.inf
        hi = 0.0 if math.isinf(z1) else math.exp(-z1 * v)
        lo = math.exp(-z0 * v) if z0 > 0 else 1.0
        return lo - hi

    def s_integral(f):
        # the s-integrand lives where exp(g (s + f)) ~ 1/z0 and decays like e^{lam s} below
        centre = -f + (math.log(1.0 / z0) / g if z0 > 0 else 0.0)
        lo = s0 if math.isfinite(s0) else min(centre, s1) - 60.0 / lam
        hi = s1 if math.isfinite(s1) else max(centre, lo) + 10.0 / g
        pts = [c for c in (centre - 5.0 / g, centre, centre + 5.0 / g) if lo < c < hi]
        val, _ = integrate.quad(lambda s: lam * math.exp(lam * s) * z_part(s, f), lo, hi,
                                points=pts or None, epsabs=0.0, epsrel=1e-11, limit=400)
        return val

    def f_integrand(f):
        if f == 0.0 and a < 1.0:
            return 0.0
        return a * f ** (a - 1.0) * s_integral(f)

    if math.isinf(f1):
        # the f-integrand decays like f^(alpha-1) exp(-lam f)
        scale = max(1.0, a) / lam
        mid = f0 + 40.0 * scale
        v1, _ = integrate.quad(f_integrand, f0, mid, epsabs=0.0, epsrel=1e-10, limit=400,
                               points=[f0 + scale, f0 + 5 * scale])
        v2, _ = integrate.quad(f_integrand, mid, math.inf, epsabs=0.0, epsrel=1e-10, limit=200)
        return v1 + v2
    val, _ = integrate.quad(f_integrand, f0, f1, epsabs=0.0, epsrel=1e-10, limit=400)
    return val


def zeta_full_above(alpha: float, lambda_star: float, gamma: float, z: float) -> float:
    """Closed form ``Lambda * z**-eta`` of the mass above ``z`` over all ``s`` and ``f``."""
    law = LimitLaw("ppp_intensity", alpha, lambda_star, gamma)
    return law.Lambda * z ** (-law.eta)


# ---------------------------------------------------------------------------
# goodness of fit and diagnostics


def ks_distance(samples, cdf: Callable) -> float:
    """Sup distance between the empirical CDF of ``samples`` and ``cdf``."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    n = x.size
    if n < 2:
        raise ValueError("need at least two samples")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def tau_diagnostic(taus, lambda_star: float, n0: int, n1: int) -> float:
    """``max |tau_n - tau_n0 - log(n/n0)/lambda_star|`` over ``n0 <= n <= n1`` (1-based)."""
    taus = np.asarray(taus, dtype=float)
    if not (1 <= n0 <= n1 <= taus.size):
        raise ValueError(f"need 1 <= n0 <= n1 <= {taus.size}")
    n = np.arange(n0, n1 + 1)
    dev = taus[n0 - 1 : n1] - taus[n0 - 1] - np.log(n / n0) / lambda_star
    return float(np.max(np.abs(dev)))


def gamma_fit_ks(values, alpha: float, lambda_star: float) -> float:
    law = LimitLaw("fitness_gap_gamma", alpha, lambda_star)
    return ks_distance(values, law.cdf)


def poisson_dispersion(counts) -> tuple[float, float]:
    """Mean and variance-to-mean ratio of box counts."""
    c = np.asarray(counts, dtype=float)
    m = c.mean()
    return float(m), float(c.var(ddof=1) / m) if m > 0 else math.nan


__all__ = [
    "EmpiricalFitness", "GammaPoints", "PsiPoints", "LargestFamilyRecord", "LimitLaw",
    "WaveProfile", "empirical_fitness", "gamma_points", "psi_points", "largest_family",
    "wave_profile", "upper_tail_masses", "conjectured_wave", "limit_law_cdf", "limit_law_sample", "zeta_box",
    "zeta_full_above", "ks_distance", "tau_diagnostic", "box_count", "mass_between",
    "poisson_dispersion",
]
