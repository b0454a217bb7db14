"""Bayesian model averaging over DAG structures on binary variables.

Structures are scored by the closed-form marginal likelihood under beta
priors with a fixed equivalent sample size S spread uniformly over
parent-configuration/value cells (prior count S / (q_i * 2) per cell), and
a uniform prior over structures.  Sampling is add/remove-edge
Metropolis-Hastings: propose uniformly from the acyclic one-edge-toggle
neighborhood, accept with min{1, |Nb(G)| P(G'|D) / (|Nb(G')| P(G|D))}.

Node indices are 0-based.  ``adjacency[a, b]`` means the edge a -> b, so a
row lists a node's children and a column its parents.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .chain import Kernel
from .rng import Xoshiro256pp, fold_in


def is_acyclic(adjacency: np.ndarray) -> bool:
    """True iff the digraph admits a topological order (Kahn's algorithm)."""
    adj = np.asarray(adjacency)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ValueError("adjacency must be square")
    if np.any(np.diagonal(adj)):
        raise ValueError("self-loops are not allowed")
    adj = adj != 0
    indeg = adj.sum(axis=0)
    queue = [int(v) for v in np.flatnonzero(indeg == 0)]
    seen = 0
    while queue:
        v = queue.pop()
        seen += 1
        for w in np.flatnonzero(adj[v]):
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(int(w))
    return seen == adj.shape[0]


@dataclass(frozen=True)
class Dag:
    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.asarray(self.adjacency, dtype=np.uint8)
        adj = (adj != 0).astype(np.uint8)
        object.__setattr__(self, "adjacency", adj)
        if not is_acyclic(adj):
            raise ValueError("graph has a directed cycle")

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def parents(self, node: int) -> tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.adjacency[:, node]))

    def key(self) -> bytes:
        return self.adjacency.tobytes()


@dataclass(frozen=True)
class BinaryDataset:
    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows)
        if rows.ndim != 2:
            raise ValueError("rows must be a 2-D array")
        if rows.size and not np.isin(rows, (0, 1)).all():
            raise ValueError("entries must be 0 or 1")
        object.__setattr__(self, "rows", rows.astype(np.uint8))

    @property
    def n(self) -> int:
        return self.rows.shape[1]

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]


@dataclass(frozen=True)
class BmaConfig:
    equivalent_sample_size: float = 4.0

    def __post_init__(self):
        if not self.equivalent_sample_size > 0:
            raise ValueError("equivalent sample size must be > 0")


def neighborhood(g: Dag) -> list[Dag]:
    """All DAGs one edge-toggle away (additions only if they stay acyclic)."""
    out = []
    nv = g.n
    for a in range(nv):
        for b in range(nv):
            if a == b:
                continue
            adj = g.adjacency.copy()
            adj[a, b] ^= 1
            if adj[a, b] == 0 or is_acyclic(adj):
                out.append(Dag(adj))
    return out


def family_log_score(data: BinaryDataset, cfg: BmaConfig, child: int,
                     parents: tuple[int, ...]) -> float:
    """Log marginal-likelihood contribution of one node given its parents.

    Parent configurations are indexed by the binary encoding of parent
    values in ascending parent-index order.
    """
    parents = tuple(sorted(parents))
    q = 1 << len(parents)
    ess = cfg.equivalent_sample_size
    s_jk = ess / (2.0 * q)
    s_j = ess / q
    counts = np.zeros(2 * q, dtype=np.int64)
    for r in range(data.n_rows):
        jidx = 0
        for l, p in enumerate(parents):
            jidx |= int(data.rows[r, p]) << l
        counts[2 * jidx + int(data.rows[r, child])] += 1
    sc = 0.0
    for jidx in range(q):
        d0 = int(counts[2 * jidx])
        d1 = int(counts[2 * jidx + 1])
        if d0 + d1 > 0:
            sc += math.lgamma(s_j) - math.lgamma(s_j + d0 + d1)
            sc += math.lgamma(s_jk + d1) - math.lgamma(s_jk)
            sc += math.lgamma(s_jk + d0) - math.lgamma(s_jk)
    return sc


def log_marginal_likelihood(g: Dag, data: BinaryDataset, cfg: BmaConfig) -> float:
    """log P(D|G): sum of per-node family scores (log-gamma form)."""
    if data.n != g.n:
        raise ValueError("dataset column count does not match graph size")
    return sum(family_log_score(data, cfg, i, g.parents(i)) for i in range(g.n))


def edge_indicator(i: int, j: int):
    """Observable G -> 1 iff the edge i -> j is present (0-based, C = 1)."""
    if i == j:
        raise ValueError("edge endpoints must differ")
    if i < 0 or j < 0:
        raise ValueError("node indices are 0-based and must be >= 0")

    def f(g) -> int:
        adj = g.adjacency if isinstance(g, Dag) else g
        return int(adj[i, j])

    f.observable_id = ("dag_edge", i, j)
    f.edge = (i, j)
    return f


def empty_dag_sampler(n: int):
    """Initial distribution for structure chains: the empty graph."""

    def sample(rng: Xoshiro256pp) -> Dag:
        return Dag(np.zeros((n, n), dtype=np.uint8))

    return sample


def _count_moves_py(adj: np.ndarray) -> int:
    nv = adj.shape[0]
    cnt = 0
    for a in range(nv):
        for b in range(nv):
            if a == b:
                continue
            if adj[a, b]:
                cnt += 1
            else:
                adj[a, b] = 1
                ok = is_acyclic(adj)
                adj[a, b] = 0
                if ok:
                    cnt += 1
    return cnt


class _DagSimulator:
    def __init__(self, data: BinaryDataset, cfg: BmaConfig):
        self.rows = data.rows
        self.ess = float(cfg.equivalent_sample_size)

    @staticmethod
    def _edges(observable):
        oid = getattr(observable, "observable_id", None)
        if isinstance(oid, tuple) and len(oid) == 3 and oid[0] == "dag_edge":
            return np.array([oid[1]], dtype=np.int64), np.array([oid[2]], dtype=np.int64)
        return None

    @staticmethod
    def _adj(initial) -> np.ndarray:
        adj = initial.adjacency if isinstance(initial, Dag) else np.asarray(initial)
        return adj.astype(np.uint8).copy()

    def _run(self, adj, n, t0, rng, obs_i, obs_j, record, values):
        from . import _jit

        state = rng.state
        totals, finals = _jit.dag_run(
            adj, self.rows, self.ess, n, t0, state, obs_i, obs_j, record, values
        )
        rng.set_state(state)
        return totals, finals

    def run_trace(self, initial, n, rng, observable):
        from .backend import use_numba

        edges = self._edges(observable)
        if edges is None or not use_numba():
            return None
        values = np.empty((1, n), dtype=np.float64)
        self._run(self._adj(initial), n, n, rng, edges[0], edges[1], True, values)
        return values[0]

    def run_average(self, initial, n, t0, rng, observable):
        from .backend import use_numba

        edges = self._edges(observable)
        if edges is None or not use_numba():
            return None
        dummy = np.empty((1, 1), dtype=np.float64)
        totals, finals = self._run(
            self._adj(initial), n, t0, rng, edges[0], edges[1], False, dummy
        )
        return totals[0] / (n - t0), finals[0]

    def run_trace_multi(self, initial, n, rng, edges: list[tuple[int, int]]) -> np.ndarray:
        """Traces of several edge indicators from one run; (n_edges, n)."""
        from .backend import use_numba

        obs_i = np.array([e[0] for e in edges], dtype=np.int64)
        obs_j = np.array([e[1] for e in edges], dtype=np.int64)
        if use_numba():
            values = np.empty((len(edges), n), dtype=np.float64)
            self._run(self._adj(initial), n, n, rng, obs_i, obs_j, True, values)
            return values
        kernel = _kernel_from_sim(self)
        state = Dag(self._adj(initial))
        values = np.empty((len(edges), n), dtype=np.float64)
        for t in range(n):
            state = kernel.step(state, rng)
            for o, (a, b) in enumerate(edges):
                values[o, t] = state.adjacency[a, b]
        return values

    def parallel_averages(self, initial_sampler, n_chains, n, t0, base_seed, observable):
        from .backend import use_numba

        edges = self._edges(observable)
        if edges is None or not use_numba():
            return None
        means = np.empty(n_chains)
        finals = np.empty(n_chains)
        for i in range(n_chains):
            rng = Xoshiro256pp(fold_in(base_seed, i))
            x0 = initial_sampler(rng)
            means[i], finals[i] = self.run_average(x0, n, t0, rng, observable)
        return means, finals


def _kernel_from_sim(sim: _DagSimulator) -> Kernel:
    rows = sim.rows
    ess = sim.ess
    data = BinaryDataset(rows)
    cfg = BmaConfig(ess)
    nv = rows.shape[1]

    def step(state: Dag, rng: Xoshiro256pp) -> Dag:
        adj = state.adjacency.copy()
        cands = []
        for a in range(nv):
            for b in range(nv):
                if a == b:
                    continue
                if adj[a, b]:
                    cands.append((a, b))
                else:
                    adj[a, b] = 1
                    ok = is_acyclic(adj)
                    adj[a, b] = 0
                    if ok:
                        cands.append((a, b))
        cnt = len(cands)
        a, b = cands[int(rng.uniform() * cnt)]
        old = family_log_score(data, cfg, b, _parents_of(adj, b))
        adj[a, b] ^= 1
        new = family_log_score(data, cfg, b, _parents_of(adj, b))
        cnt2 = _count_moves_py(adj)
        log_acc = math.log(cnt) - math.log(cnt2) + new - old
        u2 = rng.uniform()
        if log_acc < 0.0 and not (u2 < math.exp(log_acc)):
            adj[a, b] ^= 1
        return Dag(adj)

    return Kernel(
        step=step,
        is_reversible=True,
        state_descriptor="dag",
        simulator=sim,
        canonical_initial_sampler=empty_dag_sampler(nv),
    )


def _parents_of(adj: np.ndarray, node: int) -> tuple[int, ...]:
    return tuple(int(j) for j in np.flatnonzero(adj[:, node]))


def mh_dag_kernel(data: BinaryDataset, cfg: BmaConfig) -> Kernel:
    """Reversible add/remove-edge chain targeting P(G|D) under a uniform prior.

    The likelihood ratio of a proposal is evaluated locally at the child of
    the toggled edge (its family score is the only one that changes).  An
    empty dataset is allowed: every structure then scores 0 and the chain
    targets the uniform distribution over DAGs.
    """
    return _kernel_from_sim(_DagSimulator(data, cfg))


# ---------------------------------------------------------------------------
# Dataset I/O and the bundled reference generator.
# ---------------------------------------------------------------------------


def load_dataset(path, allow_header: bool = False) -> BinaryDataset:
    """Read a CSV of comma-separated 0/1 rows (no header unless allowed)."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, rec in enumerate(reader, start=1):
            if not rec or (len(rec) == 1 and not rec[0].strip()):
                continue
            if lineno == 1 and allow_header and any(
                cell.strip() not in ("0", "1") for cell in rec
            ):
                continue
            vals = []
            for col, cell in enumerate(rec, start=1):
                cell = cell.strip()
                if cell not in ("0", "1"):
                    raise ValueError(
                        f"{path}: non-binary entry {cell!r} at row {lineno}, column {col}"
                    )
                vals.append(int(cell))
            if rows and len(vals) != len(rows[0]):
                raise ValueError(
                    f"{path}: row {lineno} has {len(vals)} columns, expected {len(rows[0])}"
                )
            rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return BinaryDataset(np.array(rows, dtype=np.uint8))


def save_dataset(data: BinaryDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        for row in data.rows:
            fh.write(",".join(str(int(v)) for v in row) + "\n")


# The test network used when no dataset file is supplied (config token
# ``builtin:dag6``): six binary nodes, edges 0->1, 1->2, 0->3, 2->4, 3->4,
# 4->5, sampled with the package RNG so the data is reproducible.
REFERENCE_DAG_EDGES = ((0, 1), (1, 2), (0, 3), (2, 4), (3, 4), (4, 5))
REFERENCE_DATASET_SEED = 20240614


def reference_dag() -> Dag:
    adj = np.zeros((6, 6), dtype=np.uint8)
    for a, b in REFERENCE_DAG_EDGES:
        adj[a, b] = 1
    return Dag(adj)


def generate_reference_dataset(n_rows: int = 20,
                               seed: int = REFERENCE_DATASET_SEED) -> BinaryDataset:
    """Sample the bundled 6-node network (ancestral order, fixed CPTs)."""
    rng = Xoshiro256pp(seed)
    rows = np.zeros((n_rows, 6), dtype=np.uint8)
    for r in range(n_rows):
        x = rows[r]
        x[0] = rng.uniform() < 0.7
        x[1] = rng.uniform() < (0.8 if x[0] else 0.2)
        x[2] = rng.uniform() < (0.75 if x[1] else 0.3)
        x[3] = rng.uniform() < (0.25 if x[0] else 0.6)
        p4 = {(0, 0): 0.1, (0, 1): 0.35, (1, 0): 0.6, (1, 1): 0.9}[(int(x[2]), int(x[3]))]
        x[4] = rng.uniform() < p4
        x[5] = rng.uniform() < (0.8 if x[4] else 0.15)
    return BinaryDataset(rows)
