"""Event-loop kernels for the selection engine.

Two interchangeable implementations consume the identical canonical draw
order from one Philox generator, so results are bit-for-bit equal:

  * a numba-compiled kernel (used when numba is importable), and
  * a pure-numpy twin (fallback, and the reference for validation).

Canonical draw order per completed event:

  1. one standard exponential  -> gap = u / (N * branch_rate)
  2. one integer uniform on {0..N-1}  -> slot of the duplicated particle
  3. N*d standard normals, slot-major / coordinate-minor -> displacements

If the drawn gap overshoots the target time, the exponential draw is
discarded (memorylessness makes the restart exact) and N*d normals are drawn
for the residual displacement instead; steps 2-3 are skipped.

Scores are compared as <x, lam> (linear) or |x|^2 (Euclidean; squared norms
order identically).  Kill ties break toward the smallest particle id.
"""

from __future__ import annotations

import math

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False

# Outcome codes for a kernel call.
REACHED_TARGET = 0
BUFFER_FULL = 1


def _py_run_events(gen, X, ids, lam, euclidean, rate_total, t_now, t_target,
                   next_id, ev_time, ev_parent, ev_killed, ev_child, ev_pos,
                   record_pos, max_events):
    """Numpy twin of the compiled kernel; same draws, same arithmetic order."""
    n, d = X.shape
    n_ev = 0
    while n_ev < max_events:
        gap = gen.standard_exponential() / rate_total
        if t_now + gap > t_target:
            z = gen.standard_normal(n * d).reshape(n, d)
            X += z * math.sqrt(t_target - t_now)
            return n_ev, t_target, next_id, REACHED_TARGET
        t_now += gap
        k = int(gen.integers(0, n))
        z = gen.standard_normal(n * d).reshape(n, d)
        X += z * math.sqrt(gap)
        if euclidean:
            scores = X[:, 0] * X[:, 0]
            for c in range(1, d):
                scores = scores + X[:, c] * X[:, c]
        else:
            scores = X[:, 0] * lam[0]
            for c in range(1, d):
                scores = scores + X[:, c] * lam[c]
        low = np.flatnonzero(scores == scores.min())
        m = int(low[np.argmin(ids[low])])
        ev_time[n_ev] = t_now
        ev_parent[n_ev] = ids[k]
        if record_pos:
            ev_pos[n_ev, :] = X[k, :]
        if k == m:
            ev_killed[n_ev] = ids[k]
            ev_child[n_ev] = -1
        else:
            ev_killed[n_ev] = ids[m]
            ev_child[n_ev] = next_id
            X[m, :] = X[k, :]
            ids[m] = next_id
            next_id += 1
        n_ev += 1
    return n_ev, t_now, next_id, BUFFER_FULL


if HAVE_NUMBA:

    @numba.njit(cache=True)
    def _nb_run_events(gen, X, ids, lam, euclidean, rate_total, t_now, t_target,
                       next_id, ev_time, ev_parent, ev_killed, ev_child, ev_pos,
                       record_pos, max_events):
        n, d = X.shape
        n_ev = 0
        while n_ev < max_events:
            gap = gen.standard_exponential() / rate_total
            if t_now + gap > t_target:
                sg = math.sqrt(t_target - t_now)
                for i in range(n):
                    for c in range(d):
                        X[i, c] += gen.standard_normal() * sg
                return n_ev, t_target, next_id, REACHED_TARGET
            t_now += gap
            k = int(gen.integers(0, n))
            sg = math.sqrt(gap)
            best = np.inf
            best_id = np.int64(2**62)
            m = 0
            for i in range(n):
                acc = 0.0
                if euclidean:
                    for c in range(d):
                        x = X[i, c] + gen.standard_normal() * sg
                        X[i, c] = x
                        acc += x * x
                else:
                    for c in range(d):
                        x = X[i, c] + gen.standard_normal() * sg
                        X[i, c] = x
                        acc += x * lam[c]
                if acc < best or (acc == best and ids[i] < best_id):
                    best = acc
                    best_id = ids[i]
                    m = i
            ev_time[n_ev] = t_now
            ev_parent[n_ev] = ids[k]
            if record_pos:
                for c in range(d):
                    ev_pos[n_ev, c] = X[k, c]
            if k == m:
                ev_killed[n_ev] = ids[k]
                ev_child[n_ev] = -1
            else:
                ev_killed[n_ev] = ids[m]
                ev_child[n_ev] = next_id
                for c in range(d):
                    X[m, c] = X[k, c]
                ids[m] = next_id
                next_id += 1
            n_ev += 1
        return n_ev, t_now, next_id, BUFFER_FULL

else:  # pragma: no cover
    _nb_run_events = None


def run_events(gen, X, ids, lam, euclidean, rate_total, t_now, t_target,
               next_id, ev_time, ev_parent, ev_killed, ev_child, ev_pos,
               record_pos, max_events, use_numba):
    """Dispatch one kernel call; returns (n_events, t_now, next_id, status)."""
    fn = _nb_run_events if (use_numba and HAVE_NUMBA) else _py_run_events
    return fn(gen, X, ids, lam, euclidean, rate_total, t_now, t_target,
              next_id, ev_time, ev_parent, ev_killed, ev_child, ev_pos,
              record_pos, max_events)
