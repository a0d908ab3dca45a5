"""Compiled inner loops of the event-driven simulator.

State is passed as flat arrays so the loop can run without touching Python
objects.  Family arrays are 0-based; the Fenwick tree is 1-based with
``tree.shape[0] == capacity + 1``.
"""

import numba as nb
import numpy as np

# float state slots
CLOCK, TOTAL, LAST_WAIT = 0, 1, 2
N_FLOAT = 3

# integer state slots
(M, N, EVENTS, N_BOTH, N_NEW, N_REINF, FBUF, SINCE_CHECK, NEXT_TARGET,
 LAST_FAMILY, LAST_KIND) = range(11)
N_INT = 11

# event kinds
BOTH, NEW_FAMILY_ONLY, REINFORCE_ONLY = 0, 1, 2

# return codes of advance()
STOP_TIME, STOP_EVENTS, STOP_FAMILIES, NEED_FITNESS, NEED_CAPACITY, DRIFT = range(6)

DRIFT_PERIOD = 1 << 20
DRIFT_RTOL = 1e-9


@nb.njit(cache=True, nogil=True)
def fenwick_add(tree, i, w):
    """Add ``w`` to 0-based slot ``i``."""
    cap = tree.shape[0] - 1
    j = i + 1
    while j <= cap:
        tree[j] += w
        j += j & (-j)


@nb.njit(cache=True, nogil=True)
def fenwick_prefix(tree, i):
    """Sum of slots ``0..i-1``."""
    s = 0.0
    j = i
    while j > 0:
        s += tree[j]
        j -= j & (-j)
    return s


@nb.njit(cache=True, nogil=True)
def fenwick_build(tree, weights):
    tree[:] = 0.0
    cap = tree.shape[0] - 1
    for i in range(weights.shape[0]):
        tree[i + 1] += weights[i]
    for j in range(1, cap + 1):
        k = j + (j & (-j))
        if k <= cap:
            tree[k] += tree[j]


@nb.njit(cache=True, nogil=True)
def fenwick_find(tree, target):
    """Smallest 0-based index whose inclusive prefix sum exceeds ``target``."""
    cap = tree.shape[0] - 1
    step = 1
    while step * 2 <= cap:
        step *= 2
    pos = 0
    while step > 0:
        nxt = pos + step
        if nxt <= cap and tree[nxt] <= target:
            pos = nxt
            target -= tree[nxt]
        step >>= 1
    return pos


@nb.njit(cache=True, nogil=True)
def linear_find(fit, size, m, target):
    acc = 0.0
    for i in range(m):
        acc += fit[i] * size[i]
        if acc > target:
            return i
    return m - 1


@nb.njit(cache=True, nogil=True)
def _record_targets(ist, fst, targets, tvals):
    k = ist[NEXT_TARGET]
    while k < targets.shape[0] and ist[M] >= targets[k]:
        tvals[k] = fst[CLOCK]
        k += 1
    ist[NEXT_TARGET] = k


@nb.njit(cache=True, nogil=True)
def advance(gen, fit, size, birth, tree, fst, ist, fbuf, t_stop, max_events,
            max_families, p_both, beta, linear, targets, tvals):
    """Run the jump chain until a stop condition or a resource request.

    A wait that overshoots ``t_stop`` is discarded and the clock set to
    ``t_stop``; by memorylessness the next call draws a fresh wait.
    """
    cap = fit.shape[0]
    _record_targets(ist, fst, targets, tvals)
    while True:
        if ist[EVENTS] >= max_events:
            return STOP_EVENTS
        if ist[M] >= max_families:
            return STOP_FAMILIES
        if ist[FBUF] >= fbuf.shape[0]:
            return NEED_FITNESS
        if ist[M] >= cap:
            return NEED_CAPACITY

        total = fst[TOTAL]
        wait = gen.standard_exponential() / total
        if fst[CLOCK] + wait > t_stop:
            fst[CLOCK] = t_stop
            return STOP_TIME
        fst[CLOCK] += wait
        fst[LAST_WAIT] = wait

        m = ist[M]
        target = gen.random() * total
        if linear:
            j = linear_find(fit, size, m, target)
        else:
            j = fenwick_find(tree, target)
            if j >= m:
                j = m - 1
        u = gen.random()
        if u < p_both:
            kind = BOTH
        elif u < beta:
            kind = NEW_FAMILY_ONLY
        else:
            kind = REINFORCE_ONLY

        if kind != NEW_FAMILY_ONLY:
            size[j] += 1
            fenwick_add(tree, j, fit[j])
            total += fit[j]
            ist[N] += 1
        if kind != REINFORCE_ONLY:
            f = fbuf[ist[FBUF]]
            ist[FBUF] += 1
            fit[m] = f
            size[m] = 1
            birth[m] = fst[CLOCK]
            fenwick_add(tree, m, f)
            total += f
            ist[M] = m + 1
            ist[N] += 1
            _record_targets(ist, fst, targets, tvals)

        if kind == BOTH:
            ist[N_BOTH] += 1
        elif kind == NEW_FAMILY_ONLY:
            ist[N_NEW] += 1
        else:
            ist[N_REINF] += 1
        ist[EVENTS] += 1
        ist[LAST_FAMILY] = j
        ist[LAST_KIND] = kind
        fst[TOTAL] = total

        ist[SINCE_CHECK] += 1
        if ist[SINCE_CHECK] >= DRIFT_PERIOD:
            ist[SINCE_CHECK] = 0
            exact = 0.0
            for i in range(ist[M]):
                exact += fit[i] * size[i]
            if abs(exact - total) > DRIFT_RTOL * exact:
                return DRIFT
            fst[TOTAL] = exact


@nb.njit(cache=True, nogil=True)
def yule_path(gen, rate, horizon):
    """Population of a Yule process at ``horizon`` started from one individual."""
    y = 1
    t = 0.0
    while True:
        t += gen.standard_exponential() / (rate * y)
        if t > horizon:
            return y
        y += 1


@nb.njit(cache=True, nogil=True)
def yule_many(gen, rate, horizon, out):
    for r in range(out.shape[0]):
        out[r] = yule_path(gen, rate, horizon)


@nb.njit(cache=True, nogil=True)
def small_runs(gen, fbuf, k, p_both, beta, out_fit, out_size):
    """Repeat ``k``-event runs from scratch, one row of ``out_*`` per run.

    Each run consumes fitness values from ``fbuf`` in order, starting with the
    founder's.  Unused slots of a row stay zero.
    """
    runs, width = out_fit.shape
    fit = np.zeros(width)
    size = np.zeros(width, dtype=np.int64)
    birth = np.zeros(width)
    tree = np.zeros(width + 1)
    fst = np.zeros(N_FLOAT)
    ist = np.zeros(N_INT, dtype=np.int64)
    targets = np.zeros(0, dtype=np.int64)
    tvals = np.zeros(0)
    pos = 0
    for r in range(runs):
        fit[:] = 0.0
        size[:] = 0
        tree[:] = 0.0
        fst[:] = 0.0
        ist[:] = 0
        fit[0] = fbuf[pos]
        size[0] = 1
        fenwick_add(tree, 0, fit[0])
        fst[TOTAL] = fit[0]
        ist[M] = 1
        ist[N] = 1
        ist[FBUF] = pos + 1
        advance(gen, fit, size, birth, tree, fst, ist, fbuf, np.inf, k,
                width, p_both, beta, False, targets, tvals)
        pos = ist[FBUF]
        out_fit[r, :] = fit
        out_size[r, :] = size
