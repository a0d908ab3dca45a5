"""Exact continuous-time simulation of the reinforced branching process.

Each family ``n`` gives birth at rate ``F_n * Z_n``.  A birth founds a new
family (fitness drawn from ``mu``), reinforces the parent family, or both.
The embedded jump chain is simulated event by event: the next event waits
``Exp(sum F_n Z_n)`` and the parent family is chosen with probability
proportional to ``F_n Z_n`` by prefix search in a Fenwick tree.

Randomness
----------
Every run owns two numpy ``PCG64`` streams spawned from
``numpy.random.SeedSequence(seed)``: one drives waits, family choices and
event kinds; the other supplies fitness values in fixed blocks.  Results are
therefore a pure function of ``(params, seed, stop, plan)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _kernels as K
from .fitness import n_of_t, sample
from .malthus import ModelParams

FITNESS_BLOCK = 4096
DEFAULT_MEMORY_CAP = 200_000_000
DEFAULT_TAU_CAP = 10_000_000


class EventKind(enum.IntEnum):
    BOTH = K.BOTH
    NEW_FAMILY_ONLY = K.NEW_FAMILY_ONLY
    REINFORCE_ONLY = K.REINFORCE_ONLY


class WeightDriftError(AssertionError):
    """Running total weight drifted from its exact recomputation."""


class MemoryCapExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Family:
    fitness: float
    size: int
    birth_time: float


@dataclass(frozen=True)
class EventRecord:
    wait: float
    family_index: int
    kind: EventKind


def derive_seed(base_seed: int, replica: int) -> int:
    """64-bit seed of replica ``replica``: first word of ``SeedSequence([base_seed, replica])``."""
    ss = np.random.SeedSequence([int(base_seed), int(replica)])
    return int(ss.generate_state(1, np.uint64)[0])


class PopulationState:
    """Mutable population confined to one run.

    Family arrays are over-allocated; only the first ``M`` entries are live.
    Family indices are 0-based (the founding family is index 0).
    """

    def __init__(self, params: ModelParams, seed: int, capacity: int = 1024,
                 memory_cap: int = DEFAULT_MEMORY_CAP, linear_select: bool = False):
        self.params = params
        self.seed = int(seed)
        self.memory_cap = int(memory_cap)
        self.linear_select = bool(linear_select)
        ev_ss, fit_ss = np.random.SeedSequence(self.seed).spawn(2)
        self.event_rng = np.random.Generator(np.random.PCG64(ev_ss))
        self.fitness_rng = np.random.Generator(np.random.PCG64(fit_ss))

        cap = max(2, min(int(capacity), self.memory_cap))
        self._fit = np.zeros(cap)
        self._size = np.zeros(cap, dtype=np.int64)
        self._birth = np.zeros(cap)
        self._tree = np.zeros(cap + 1)
        self._fst = np.zeros(K.N_FLOAT)
        self._ist = np.zeros(K.N_INT, dtype=np.int64)
        self._fbuf = np.empty(0)
        self._refill()

        f0 = self._fbuf[0]
        self._ist[K.FBUF] = 1
        self._fit[0] = f0
        self._size[0] = 1
        self._birth[0] = 0.0
        K.fenwick_add(self._tree, 0, f0)
        self._fst[K.TOTAL] = f0
        self._ist[K.M] = 1
        self._ist[K.N] = 1

    # -- resources ----------------------------------------------------
    def _refill(self):
        rest = self._fbuf[self._ist[K.FBUF]:]
        fresh = sample(self.params.dist, self.fitness_rng, FITNESS_BLOCK)
        self._fbuf = np.concatenate((rest, fresh))
        self._ist[K.FBUF] = 0

    def _grow(self):
        cap = self._fit.shape[0]
        if cap >= self.memory_cap:
            raise MemoryCapExceeded(f"family count reached the cap of {self.memory_cap}")
        new = min(2 * cap, self.memory_cap)
        m = self.M
        for name in ("_fit", "_size", "_birth"):
            old = getattr(self, name)
            arr = np.zeros(new, dtype=old.dtype)
            arr[:m] = old[:m]
            setattr(self, name, arr)
        self._tree = np.zeros(new + 1)
        K.fenwick_build(self._tree, self._fit[:m] * self._size[:m])

    # -- views --------------------------------------------------------
    @property
    def M(self) -> int:
        return int(self._ist[K.M])

    @property
    def N(self) -> int:
        return int(self._ist[K.N])

    @property
    def clock(self) -> float:
        return float(self._fst[K.CLOCK])

    @property
    def event_count(self) -> int:
        return int(self._ist[K.EVENTS])

    @property
    def total_weight(self) -> float:
        return float(self._fst[K.TOTAL])

    @property
    def fitness(self) -> np.ndarray:
        return self._fit[: self.M]

    @property
    def sizes(self) -> np.ndarray:
        return self._size[: self.M]

    @property
    def birth_times(self) -> np.ndarray:
        return self._birth[: self.M]

    @property
    def tallies(self) -> dict:
        return {
            "both": int(self._ist[K.N_BOTH]),
            "new_family_only": int(self._ist[K.N_NEW]),
            "reinforce_only": int(self._ist[K.N_REINF]),
        }

    def family(self, i: int) -> Family:
        if not 0 <= i < self.M:
            raise IndexError(i)
        return Family(float(self._fit[i]), int(self._size[i]), float(self._birth[i]))

    @property
    def families(self) -> list[Family]:
        return [self.family(i) for i in range(self.M)]

    def fenwick_total(self) -> float:
        return K.fenwick_prefix(self._tree, self.M)

    def recompute_weight(self) -> float:
        return float(np.dot(self.fitness, self.sizes))

    def check_invariants(self, rtol: float = 1e-9) -> None:
        """Raise ``AssertionError`` if counters or weight indices disagree."""
        t = self.tallies
        assert self.N == int(self.sizes.sum())
        assert self.N == 1 + t["reinforce_only"] + t["new_family_only"] + 2 * t["both"]
        assert self.M == 1 + t["new_family_only"] + t["both"]
        exact = self.recompute_weight()
        assert abs(self.total_weight - exact) <= rtol * exact
        assert abs(self.fenwick_total() - exact) <= rtol * exact

    # -- driving ------------------------------------------------------
    def advance(self, t_stop: float = math.inf, max_events: int | None = None,
                max_families: int | None = None, targets=None, tvals=None) -> int:
        """Advance until a stop condition; returns a ``_kernels`` STOP_* code."""
        p_both, _, _ = self.params.event_probabilities
        me = np.iinfo(np.int64).max if max_events is None else int(max_events)
        mf = np.iinfo(np.int64).max if max_families is None else int(max_families)
        if targets is None:
            targets = np.zeros(0, dtype=np.int64)
            tvals = np.zeros(0)
        while True:
            code = K.advance(
                self.event_rng, self._fit, self._size, self._birth, self._tree,
                self._fst, self._ist, self._fbuf, float(t_stop), me, mf,
                p_both, self.params.beta, self.linear_select, targets, tvals,
            )
            if code == K.NEED_FITNESS:
                self._refill()
            elif code == K.NEED_CAPACITY:
                self._grow()
            elif code == K.DRIFT:
                raise WeightDriftError(
                    f"total weight {self.total_weight} drifted from "
                    f"{self.recompute_weight()} beyond relative {K.DRIFT_RTOL}"
                )
            else:
                return code


def init(params: ModelParams, seed: int, **kwargs) -> PopulationState:
    """One family of one individual at time zero, fitness drawn from ``mu``."""
    return PopulationState(params, seed, **kwargs)


def step(state: PopulationState) -> EventRecord:
    """Perform exactly one birth event."""
    if not state.total_weight > 0:
        raise ValueError("population has zero total weight")
    state.advance(max_events=state.event_count + 1)
    return EventRecord(
        float(state._fst[K.LAST_WAIT]),
        int(state._ist[K.LAST_FAMILY]),
        EventKind(int(state._ist[K.LAST_KIND])),
    )


# ---------------------------------------------------------------------------
# runs with snapshots


@dataclass(frozen=True)
class StopRule:
    max_time: float | None = None
    max_events: int | None = None
    max_families: int | None = None

    def __post_init__(self):
        if self.max_time is None and self.max_events is None and self.max_families is None:
            raise ValueError("stop rule needs at least one of max_time, max_events, max_families")

    def to_json(self) -> dict:
        return {k: v for k, v in (("max_time", self.max_time), ("max_events", self.max_events),
                                  ("max_families", self.max_families)) if v is not None}


@dataclass
class SnapshotPlan:
    """Analysis times and their window targets ``n(t)``.

    ``n_targets`` is ``None`` when no window anchoring is requested (for
    instance for discrete fitness laws, where ``n(t)`` may be undefined).
    """

    analysis_times: list[float]
    n_targets: list[int] | None = None
    T_values: list[float | None] = field(default_factory=list)

    @classmethod
    def from_times(cls, params: ModelParams, times: Iterable[float], windows: bool = True):
        times = [float(t) for t in times]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("analysis times must be strictly increasing")
        if any(t < 0 for t in times):
            raise ValueError("analysis times must be non-negative")
        targets = [n_of_t(params.dist, t) for t in times] if windows else None
        return cls(times, targets, [None] * len(times))


@dataclass
class Snapshot:
    time: float
    fitness: np.ndarray
    size: np.ndarray
    birth_time: np.ndarray
    N: int
    M: int
    total_weight: float
    T_of_t: float | None = None
    n_of_t: int | None = None

    @classmethod
    def capture(cls, state: PopulationState, time: float | None = None) -> "Snapshot":
        return cls(
            state.clock if time is None else float(time),
            state.fitness.copy(), state.sizes.copy(), state.birth_times.copy(),
            state.N, state.M, state.total_weight,
        )


@dataclass
class RunResult:
    seed: int
    params: ModelParams
    stop: StopRule
    snapshots: list[Snapshot]
    tallies: dict
    T_values: dict
    taus: np.ndarray
    N: int
    M: int
    clock: float
    events: int
    status: str = "ok"
    final: Snapshot | None = None

    @property
    def partial(self) -> bool:
        return self.status != "ok"

    def summary(self) -> dict:
        return {
            "seed": self.seed,
            "params": self.params.to_json(),
            "stop": self.stop.to_json(),
            "N": self.N,
            "M": self.M,
            "clock": self.clock,
            "events": self.events,
            "T_values": {repr(float(t)): v for t, v in self.T_values.items()},
            "tallies": self.tallies,
            "status": self.status,
        }


def run(params: ModelParams, seed: int, stop: StopRule, plan: SnapshotPlan | None = None,
        sinks: Sequence[Callable[[Snapshot], None]] = (), *, resolve_windows: bool = True,
        memory_cap: int = DEFAULT_MEMORY_CAP, tau_cap: int = DEFAULT_TAU_CAP,
        capacity: int = 1024, final_snapshot: bool = False) -> RunResult:
    """Simulate one path with snapshots at the plan's analysis times.

    Snapshots are taken exactly at each analysis time not beyond the stop
    rule.  The window anchor ``T(t)`` is the clock at the event where the
    family count first reaches ``n(t)``; when that happens after the stop
    (or after ``t`` itself) the run keeps going past the stop until every
    pending anchor is known, unless ``resolve_windows`` is false.  The
    reported ``N``, ``M`` and clock are those at the stop; with
    ``final_snapshot`` the state there is also kept as ``result.final``.
    """
    plan = plan or SnapshotPlan([])
    state = init(params, seed, capacity=capacity, memory_cap=memory_cap)
    t_max = math.inf if stop.max_time is None else float(stop.max_time)

    targets = None
    tvals = None
    if plan.n_targets is not None and plan.analysis_times:
        targets = np.asarray(plan.n_targets, dtype=np.int64)
        if np.any(np.diff(targets) < 0):
            raise ValueError("window targets must be non-decreasing in t")
        tvals = np.full(len(targets), np.nan)

    snapshots: list[Snapshot] = []
    status = "ok"
    final = None
    last = None
    try:
        code = K.STOP_TIME
        for t in plan.analysis_times:
            if t > t_max:
                break
            code = state.advance(t, stop.max_events, stop.max_families, targets, tvals)
            if code != K.STOP_TIME:
                break
            snapshots.append(Snapshot.capture(state, t))
        if code == K.STOP_TIME:
            state.advance(t_max, stop.max_events, stop.max_families, targets, tvals)
        final = (state.N, state.M, state.clock, state.event_count, dict(state.tallies))
        taus = state.birth_times[:tau_cap].copy()
        if final_snapshot:
            last = Snapshot.capture(state)
        if targets is not None and resolve_windows:
            need = int(targets[-1])
            if state.M < need:
                state.advance(math.inf, None, need, targets, tvals)
    except MemoryCapExceeded:
        status = "memory_abort"
        if final is None:
            final = (state.N, state.M, state.clock, state.event_count, dict(state.tallies))
            taus = state.birth_times[:tau_cap].copy()

    T_values = {}
    if targets is not None:
        for i, t in enumerate(plan.analysis_times):
            T = None if np.isnan(tvals[i]) else float(tvals[i])
            T_values[t] = T
            plan.T_values[i] = T
        for snap in snapshots:
            i = plan.analysis_times.index(snap.time)
            snap.T_of_t = T_values[snap.time]
            snap.n_of_t = int(targets[i])
    for snap in snapshots:
        for sink in sinks:
            sink(snap)

    N, M, clock, events, tallies = final
    return RunResult(seed, params, stop, snapshots, tallies, T_values, taus,
                     N, M, clock, events, status, last)


# ---------------------------------------------------------------------------
# Yule reference process


def yule_reference(rate: float, horizon: float, seed: int) -> dict:
    """Pure-birth process at ``horizon`` and its martingale ``exp(-rate*horizon) * Y``."""
    if not rate > 0:
        raise ValueError("rate must be positive")
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    y = int(K.yule_path(gen, float(rate), float(horizon)))
    return {"Y": y, "scaled": math.exp(-rate * horizon) * y}


def yule_replicas(rate: float, horizon: float, replicas: int, seed: int) -> np.ndarray:
    """Martingale values ``exp(-rate*horizon) * Y(horizon)`` of independent paths."""
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
    out = np.empty(int(replicas), dtype=np.int64)
    K.yule_many(gen, float(rate), float(horizon), out)
    return math.exp(-rate * horizon) * out


def small_runs(params: ModelParams, k: int, runs: int, seed: int):
    """Final ``(fitness, size)`` rows of many independent ``k``-event runs.

    Uses the same compiled event loop as :func:`run`; meant for checking the
    jump chain against exact enumeration on tiny trees.
    """
    ev_ss, fit_ss = np.random.SeedSequence(int(seed)).spawn(2)
    gen = np.random.Generator(np.random.PCG64(ev_ss))
    fbuf = sample(params.dist, np.random.Generator(np.random.PCG64(fit_ss)), runs * (k + 1))
    p_both, _, _ = params.event_probabilities
    out_fit = np.zeros((runs, k + 1))
    out_size = np.zeros((runs, k + 1), dtype=np.int64)
    K.small_runs(gen, fbuf, int(k), p_both, params.beta, out_fit, out_size)
    return out_fit, out_size
