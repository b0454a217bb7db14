"""Numba-jitted twins of the hot loops.

Only imported when the numba backend is active.  Every function consumes
per-chain xoshiro256++ streams exactly like the pure-Python/numpy paths
(same draw order, same comparisons), so outputs are bit-identical across
backends.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

U = np.uint64
_GAMMA = U(0x9E3779B97F4A7C15)
_MIX1 = U(0xBF58476D1CE4E5B9)
_MIX2 = U(0x94D049BB133111EB)
_INV53 = 2.0**-53


@njit(cache=True, inline="always")
def _mix64(z):
    z = z + _GAMMA
    z = (z ^ (z >> U(30))) * _MIX1
    z = (z ^ (z >> U(27))) * _MIX2
    return z ^ (z >> U(31))


@njit(cache=True)
def fold_in(seed, data):
    return _mix64(U(seed) ^ _mix64(U(data)))


@njit(cache=True)
def expand_seed(seed):
    s = U(seed)
    out = np.empty(4, np.uint64)
    for j in range(4):
        s = s + _GAMMA
        z = (s ^ (s >> U(30))) * _MIX1
        z = (z ^ (z >> U(27))) * _MIX2
        out[j] = z ^ (z >> U(31))
    if out[0] == U(0) and out[1] == U(0) and out[2] == U(0) and out[3] == U(0):
        out[0] = U(1)
    return out


@njit(cache=True, inline="always")
def _next_u64(s0, s1, s2, s3):
    tmp = s0 + s3
    result = ((tmp << U(23)) | (tmp >> U(41))) + s0
    t = s1 << U(17)
    s2 = s2 ^ s0
    s3 = s3 ^ s1
    s1 = s1 ^ s2
    s0 = s0 ^ s3
    s2 = s2 ^ t
    s3 = (s3 << U(45)) | (s3 >> U(19))
    return s0, s1, s2, s3, result


@njit(cache=True, inline="always")
def _uniform(s0, s1, s2, s3):
    s0, s1, s2, s3, r = _next_u64(s0, s1, s2, s3)
    return s0, s1, s2, s3, (r >> U(11)) * _INV53


@njit(cache=True)
def raw_u64_block(state, n):
    """Emit n raw outputs, advancing ``state`` in place (for RNG tests)."""
    s0, s1, s2, s3 = state[0], state[1], state[2], state[3]
    out = np.empty(n, np.uint64)
    for i in range(n):
        s0, s1, s2, s3, r = _next_u64(s0, s1, s2, s3)
        out[i] = r
    state[0], state[1], state[2], state[3] = s0, s1, s2, s3
    return out


# ---------------------------------------------------------------------------
# Spin chains.  family: 0 = mean-field (local field from total magnetization),
# 1 = lattice (local field from neighbor table).  kind: 0 = random scan,
# 1 = systematic scan (one step is a full ascending sweep), 2 = Metropolis
# spin flip.  obs: 1 = magnetization, 2 = sign of magnetization.
# ---------------------------------------------------------------------------


@njit(cache=True)
def spin_run(family, kind, w, nbr, offset, p_plus, acc, n, t0, state, obs,
             record, values):
    n_s = w.shape[0]
    s0, s1, s2, s3 = state[0], state[1], state[2], state[3]
    m = 0
    for i in range(n_s):
        m += w[i]
    total = 0.0
    f = 0.0
    for t in range(n):
        if kind == 0:
            s0, s1, s2, s3, u1 = _uniform(s0, s1, s2, s3)
            site = int(u1 * n_s)
            s0, s1, s2, s3, u2 = _uniform(s0, s1, s2, s3)
            if family == 0:
                loc = m - w[site]
            else:
                loc = 0
                for d in range(nbr.shape[1]):
                    loc += w[nbr[site, d]]
            idx = (loc + offset) >> 1
            new = 1 if u2 < p_plus[idx] else -1
            m += new - w[site]
            w[site] = new
        elif kind == 1:
            for site in range(n_s):
                s0, s1, s2, s3, u2 = _uniform(s0, s1, s2, s3)
                if family == 0:
                    loc = m - w[site]
                else:
                    loc = 0
                    for d in range(nbr.shape[1]):
                        loc += w[nbr[site, d]]
                idx = (loc + offset) >> 1
                new = 1 if u2 < p_plus[idx] else -1
                m += new - w[site]
                w[site] = new
        else:
            s0, s1, s2, s3, u1 = _uniform(s0, s1, s2, s3)
            site = int(u1 * n_s)
            s0, s1, s2, s3, u2 = _uniform(s0, s1, s2, s3)
            if family == 0:
                loc = m - w[site]
            else:
                loc = 0
                for d in range(nbr.shape[1]):
                    loc += w[nbr[site, d]]
            idx = (loc + offset) >> 1
            spin = w[site]
            if u2 < acc[(spin + 1) >> 1, idx]:
                w[site] = -spin
                m -= 2 * spin
        if obs == 1:
            f = float(m)
        else:
            f = float((m > 0) - (m < 0))
        if record:
            values[t] = f
        if t >= t0:
            total += f
    state[0], state[1], state[2], state[3] = s0, s1, s2, s3
    return total, f


# ---------------------------------------------------------------------------
# Finite-state chain driven by a cumulative transition matrix.
# ---------------------------------------------------------------------------


@njit(cache=True)
def finite_run(cum, fvec, x0, n, t0, state, record, values):
    s0, s1, s2, s3 = state[0], state[1], state[2], state[3]
    x = x0
    total = 0.0
    f = 0.0
    for t in range(n):
        s0, s1, s2, s3, u = _uniform(s0, s1, s2, s3)
        j = 0
        while u >= cum[x, j]:
            j += 1
        x = j
        f = fvec[x]
        if record:
            values[t] = f
        if t >= t0:
            total += f
    state[0], state[1], state[2], state[3] = s0, s1, s2, s3
    return total, f, x


# ---------------------------------------------------------------------------
# Add/remove-edge Metropolis-Hastings over DAG structures.
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _has_path(adj, src, dst, stack, visited):
    nv = adj.shape[0]
    for i in range(nv):
        visited[i] = 0
    top = 0
    stack[top] = src
    top += 1
    visited[src] = 1
    while top > 0:
        top -= 1
        x = stack[top]
        for y in range(nv):
            if adj[x, y] != 0 and visited[y] == 0:
                if y == dst:
                    return True
                visited[y] = 1
                stack[top] = y
                top += 1
    return False


@njit(cache=True)
def dag_family_score(adj, child, rows, ess, counts):
    """Log marginal-likelihood contribution of one node family."""
    nv = adj.shape[0]
    n_rows = rows.shape[0]
    n_par = 0
    for j in range(nv):
        if adj[j, child] != 0:
            n_par += 1
    q = 1 << n_par
    s_jk = ess / (2.0 * q)
    s_j = ess / q
    for c in range(2 * q):
        counts[c] = 0
    for r in range(n_rows):
        jidx = 0
        l = 0
        for j in range(nv):
            if adj[j, child] != 0:
                jidx |= rows[r, j] << l
                l += 1
        counts[2 * jidx + rows[r, child]] += 1
    sc = 0.0
    for jidx in range(q):
        d0 = counts[2 * jidx]
        d1 = counts[2 * jidx + 1]
        if d0 + d1 > 0:
            sc += math.lgamma(s_j) - math.lgamma(s_j + d0 + d1)
            sc += math.lgamma(s_jk + d1) - math.lgamma(s_jk)
            sc += math.lgamma(s_jk + d0) - math.lgamma(s_jk)
    return sc


@njit(cache=True)
def _collect_moves(adj, cand_a, cand_b, stack, visited):
    nv = adj.shape[0]
    cnt = 0
    for a in range(nv):
        for b in range(nv):
            if a == b:
                continue
            if adj[a, b] != 0:
                cand_a[cnt] = a
                cand_b[cnt] = b
                cnt += 1
            elif not _has_path(adj, b, a, stack, visited):
                cand_a[cnt] = a
                cand_b[cnt] = b
                cnt += 1
    return cnt


@njit(cache=True)
def _count_moves(adj, stack, visited):
    nv = adj.shape[0]
    cnt = 0
    for a in range(nv):
        for b in range(nv):
            if a == b:
                continue
            if adj[a, b] != 0:
                cnt += 1
            elif not _has_path(adj, b, a, stack, visited):
                cnt += 1
    return cnt


@njit(cache=True)
def dag_run(adj, rows, ess, n, t0, state, obs_i, obs_j, record, values):
    """Run the structure chain; record edge-indicator observables.

    adj is modified in place (the final structure stays in it).  Returns
    (totals, finals): per-observable sums over steps t0+1..n and final
    values.
    """
    nv = adj.shape[0]
    n_obs = obs_i.shape[0]
    s0, s1, s2, s3 = state[0], state[1], state[2], state[3]
    stack = np.empty(nv, np.int64)
    visited = np.zeros(nv, np.uint8)
    cand_a = np.empty(nv * nv, np.int64)
    cand_b = np.empty(nv * nv, np.int64)
    counts = np.zeros(2 << nv, np.int64)
    totals = np.zeros(n_obs)
    finals = np.zeros(n_obs)
    for t in range(n):
        cnt = _collect_moves(adj, cand_a, cand_b, stack, visited)
        s0, s1, s2, s3, u1 = _uniform(s0, s1, s2, s3)
        choice = int(u1 * cnt)
        a = cand_a[choice]
        b = cand_b[choice]
        old_score = dag_family_score(adj, b, rows, ess, counts)
        adj[a, b] ^= 1
        new_score = dag_family_score(adj, b, rows, ess, counts)
        cnt2 = _count_moves(adj, stack, visited)
        log_acc = math.log(cnt) - math.log(cnt2) + new_score - old_score
        s0, s1, s2, s3, u2 = _uniform(s0, s1, s2, s3)
        if log_acc < 0.0 and not (u2 < math.exp(log_acc)):
            adj[a, b] ^= 1  # reject
        for o in range(n_obs):
            f = float(adj[obs_i[o], obs_j[o]])
            finals[o] = f
            if record:
                values[o, t] = f
            if t >= t0:
                totals[o] += f
    state[0], state[1], state[2], state[3] = s0, s1, s2, s3
    return totals, finals


# ---------------------------------------------------------------------------
# Windowed autocovariances, compensated (Kahan) accumulation.
# ---------------------------------------------------------------------------


@njit(cache=True)
def autocov_block(x, t0, k):
    """Lag 0..k autocovariances with the estimator's index windows.

    For lag i the product sum runs over j in [t0, N-k-1] (0-based) and the
    two centering means over the first-factor and second-factor windows.
    """
    n = x.shape[0]
    d = n - t0 - k
    a_sum = 0.0
    a_c = 0.0
    for j in range(t0, n - k):
        y = x[j] - a_c
        tmp = a_sum + y
        a_c = (tmp - a_sum) - y
        a_sum = tmp
    mean_a = a_sum / d
    out = np.empty(k + 1)
    for i in range(k + 1):
        p_sum = 0.0
        p_c = 0.0
        b_sum = 0.0
        b_c = 0.0
        for j in range(t0, n - k):
            y = x[j] * x[j + i] - p_c
            tmp = p_sum + y
            p_c = (tmp - p_sum) - y
            p_sum = tmp
            y = x[j + i] - b_c
            tmp = b_sum + y
            b_c = (tmp - b_sum) - y
            b_sum = tmp
        mean_b = b_sum / d
        out[i] = p_sum / d - 0.5 * mean_a * mean_a - 0.5 * mean_b * mean_b
    return out
