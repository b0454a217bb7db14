"""Pure-numpy spin engine: all chains advance in lockstep.

Each chain owns one row of the (m, 4) uint64 xoshiro state matrix, so the
per-chain random streams are identical to the scalar backends and output
is bit-for-bit the same.
"""

from __future__ import annotations

import numpy as np

from .rng import uniform_vec


def spin_lockstep(family, kind, nbr, offset, p_plus, acc, w, n, t0, states,
                  obs, record, debug_check=False):
    """Advance every chain ``n`` steps; ``w`` and ``states`` update in place.

    Returns (totals, finals, values): per-chain sums of the observable over
    steps t0+1..n, observable values after step n, and the full (m, n)
    value matrix when ``record`` (else None).
    """
    m, n_s = w.shape
    rows = np.arange(m)
    mag = w.sum(axis=1, dtype=np.int64)
    totals = np.zeros(m)
    values = np.empty((m, n)) if record else None
    f = np.zeros(m)
    for t in range(n):
        if kind in (0, 2):
            u1 = uniform_vec(states)
            sites = (u1 * n_s).astype(np.int64)
            u2 = uniform_vec(states)
            cur = w[rows, sites]
            if family == 0:
                loc = mag - cur
            else:
                loc = w[rows[:, None], nbr[sites]].sum(axis=1, dtype=np.int64)
            idx = (loc + offset) >> 1
            if kind == 0:
                new = np.where(u2 < p_plus[idx], 1, -1).astype(np.int8)
            else:
                a = acc[(cur.astype(np.int64) + 1) >> 1, idx]
                new = np.where(u2 < a, -cur, cur)
            mag += new - cur
            w[rows, sites] = new
        else:
            for site in range(n_s):
                u = uniform_vec(states)
                cur = w[:, site].copy()
                if family == 0:
                    loc = mag - cur
                else:
                    loc = w[:, nbr[site]].sum(axis=1, dtype=np.int64)
                idx = (loc + offset) >> 1
                new = np.where(u < p_plus[idx], 1, -1).astype(np.int8)
                mag += new - cur
                w[:, site] = new
        if debug_check and not np.array_equal(mag, w.sum(axis=1, dtype=np.int64)):
            raise AssertionError("incremental magnetization drifted from recompute")
        if obs == 1:
            f = mag.astype(np.float64)
        else:
            f = np.sign(mag).astype(np.float64)
        if record:
            values[:, t] = f
        if t >= t0:
            totals += f
    return totals, f, values
