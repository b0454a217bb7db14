import itertools
import math

import numpy as np
import pytest

import oracles
from mcmcbounds.chain import run_chain, simulate_trace
from mcmcbounds.dagbma import (
    BinaryDataset,
    BmaConfig,
    Dag,
    edge_indicator,
    empty_dag_sampler,
    family_log_score,
    generate_reference_dataset,
    is_acyclic,
    load_dataset,
    log_marginal_likelihood,
    mh_dag_kernel,
    neighborhood,
    reference_dag,
    save_dataset,
)
from mcmcbounds.rng import Xoshiro256pp


def _dataset_2var(seed=7, n_rows=20, flip=0.2):
    # strongly correlated pair: x1 = x0 with probability 1-flip
    rng = Xoshiro256pp(seed)
    rows = np.zeros((n_rows, 2), dtype=np.uint8)
    for r in range(n_rows):
        rows[r, 0] = rng.uniform() < 0.5
        rows[r, 1] = rows[r, 0] if rng.uniform() >= flip else 1 - rows[r, 0]
    return BinaryDataset(rows)


def test_is_acyclic_basics():
    assert is_acyclic(np.zeros((3, 3), dtype=np.uint8))
    cycle = np.zeros((3, 3), dtype=np.uint8)
    cycle[0, 1] = cycle[1, 2] = cycle[2, 0] = 1
    assert not is_acyclic(cycle)
    loop = np.zeros((2, 2), dtype=np.uint8)
    loop[0, 0] = 1
    with pytest.raises(ValueError):
        is_acyclic(loop)


def test_acyclic_count_n3_robinson():
    # filtering all 2^6 digraphs on 3 labeled nodes leaves 25 DAGs
    count = 0
    pairs = [(a, b) for a in range(3) for b in range(3) if a != b]
    for mask in itertools.product((0, 1), repeat=6):
        adj = np.zeros((3, 3), dtype=np.uint8)
        for bit, (a, b) in zip(mask, pairs):
            adj[a, b] = bit
        count += is_acyclic(adj)
    assert count == 25
    assert len(oracles.all_dags(3)) == 25


def test_neighborhood_sizes():
    assert len(neighborhood(Dag(np.zeros((2, 2), dtype=np.uint8)))) == 2
    adj = np.zeros((2, 2), dtype=np.uint8)
    adj[0, 1] = 1
    nb = neighborhood(Dag(adj))
    assert len(nb) == 1 and nb[0].adjacency.sum() == 0
    assert len(neighborhood(Dag(np.zeros((3, 3), dtype=np.uint8)))) == 6


def test_single_node_marginal_likelihood():
    # S=4 on one node: prior cell counts (2, 2); two observations of 1
    # give (1/2) * (3/5) = 0.3 by the Polya-urn sequential rule
    data = BinaryDataset(np.array([[1], [1]], dtype=np.uint8))
    g = Dag(np.zeros((1, 1), dtype=np.uint8))
    got = math.exp(log_marginal_likelihood(g, data, BmaConfig(4.0)))
    assert got == pytest.approx(0.3, rel=1e-12)


def test_empty_dataset_log_likelihood_zero():
    data = BinaryDataset(np.zeros((0, 3), dtype=np.uint8))
    for adj in oracles.all_dags(3)[:10]:
        assert log_marginal_likelihood(Dag(adj), data, BmaConfig(4.0)) == 0.0


def test_marginal_likelihood_vs_polya_and_beta_oracles():
    data = _dataset_2var()
    cfg = BmaConfig(4.0)
    for adj in oracles.all_dags(2):
        ours = log_marginal_likelihood(Dag(adj), data, cfg)
        polya = float(oracles.polya_log_likelihood(adj, data.rows, 4.0))
        beta = float(oracles.beta_integral_log_likelihood(adj, data.rows, 4.0))
        assert ours == pytest.approx(polya, abs=1e-10)
        assert ours == pytest.approx(beta, abs=1e-10)


def test_marginal_likelihood_row_permutation_invariance():
    data = generate_reference_dataset()
    cfg = BmaConfig(4.0)
    g = reference_dag()
    base = log_marginal_likelihood(g, data, cfg)
    perm = np.random.default_rng(3).permutation(data.n_rows)
    shuffled = BinaryDataset(data.rows[perm])
    assert log_marginal_likelihood(g, shuffled, cfg) == pytest.approx(base, abs=1e-12)


def test_score_additivity_and_local_delta():
    # toggling edge (a, b) changes only node b's family score
    data = generate_reference_dataset()
    cfg = BmaConfig(4.0)
    rng = np.random.default_rng(11)
    state = Dag(np.zeros((6, 6), dtype=np.uint8))
    checked = 0
    while checked < 1000:
        moves = neighborhood(state)
        nxt = moves[rng.integers(len(moves))]
        diff = state.adjacency.astype(int) - nxt.adjacency.astype(int)
        (a,), (b,) = np.nonzero(diff)
        full_delta = log_marginal_likelihood(nxt, data, cfg) - log_marginal_likelihood(
            state, data, cfg
        )
        local_delta = family_log_score(data, cfg, int(b), nxt.parents(int(b))) - (
            family_log_score(data, cfg, int(b), state.parents(int(b)))
        )
        assert full_delta == pytest.approx(local_delta, abs=1e-10)
        state = nxt
        checked += 1


def test_mh_kernel_detailed_balance_exact_n2():
    data = _dataset_2var()
    cfg = BmaConfig(4.0)
    dags = [Dag(a) for a in oracles.all_dags(2)]
    logw = np.array([log_marginal_likelihood(g, data, cfg) for g in dags])
    w = np.exp(logw - logw.max())
    pi = w / w.sum()
    keys = {g.key(): i for i, g in enumerate(dags)}
    # exact transition matrix of the add/remove-edge chain
    p = np.zeros((3, 3))
    for i, g in enumerate(dags):
        nb = neighborhood(g)
        for h in nb:
            j = keys[h.key()]
            ratio = (len(nb) * w[j]) / (len(neighborhood(h)) * w[i])
            a = min(1.0, ratio)
            p[i, j] += a / len(nb)
        p[i, i] += 1.0 - p[i].sum()
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-14)
    assert np.abs(pi @ p - pi).max() < 1e-12
    flux = pi[:, None] * p
    assert np.abs(flux - flux.T).max() < 1e-12


def test_mh_uniform_posterior_on_empty_dataset(backend):
    # empty dataset: every structure scores 0, so the posterior is uniform
    # over the 3 DAGs on 2 nodes; check long-run visit frequencies
    data = BinaryDataset(np.zeros((0, 2), dtype=np.uint8))
    kernel = mh_dag_kernel(data, BmaConfig(4.0))
    n = 60_000
    edges = [(0, 1), (1, 0)]
    rng = Xoshiro256pp(4)
    x0 = empty_dag_sampler(2)(rng)
    values = kernel.simulator.run_trace_multi(x0, n, rng, edges)
    freq_01 = values[0, n // 10 :].mean()
    freq_10 = values[1, n // 10 :].mean()
    freq_empty = 1.0 - freq_01 - freq_10
    # 3 standard errors with a generous correlation-time allowance
    se = 3 * math.sqrt((1 / 3) * (2 / 3) * 6 / n)
    for freq in (freq_01, freq_10, freq_empty):
        assert abs(freq - 1 / 3) < se


def test_mh_posterior_single_row_dataset(backend):
    data = BinaryDataset(np.array([[1, 1]], dtype=np.uint8))
    cfg = BmaConfig(4.0)
    kernel = mh_dag_kernel(data, cfg)
    exact = oracles.exact_edge_posterior(data.rows, 4.0, (0, 1))
    n = 60_000
    tr = run_chain(kernel, Dag(np.zeros((2, 2), dtype=np.uint8)),
                   edge_indicator(0, 1), n, seed=4)
    est = tr.values[n // 10 :].mean()
    assert abs(est - exact) < 0.02


def test_acceptance_preserves_acyclicity(backend):
    data = generate_reference_dataset()
    kernel = mh_dag_kernel(data, BmaConfig(4.0))
    state = Dag(np.zeros((6, 6), dtype=np.uint8))
    rng = Xoshiro256pp(6)
    for _ in range(300):
        state = kernel.step(state, rng)
        assert is_acyclic(state.adjacency)  # Dag() would also raise


def test_edge_indicator():
    f = edge_indicator(0, 1)
    assert f(Dag(np.zeros((2, 2), dtype=np.uint8))) == 0
    adj = np.zeros((2, 2), dtype=np.uint8)
    adj[0, 1] = 1
    assert f(Dag(adj)) == 1
    with pytest.raises(ValueError):
        edge_indicator(2, 2)


def test_load_dataset_roundtrip(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("0,1\n1,1\n")
    data = load_dataset(path)
    assert data.n == 2 and data.n_rows == 2
    assert np.array_equal(data.rows, [[0, 1], [1, 1]])


def test_load_dataset_rejects_nonbinary(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0,1\n1,2\n")
    with pytest.raises(ValueError, match="row 2, column 2"):
        load_dataset(path)


def test_load_dataset_rejects_ragged(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("0,1\n1\n")
    with pytest.raises(ValueError, match="row 2"):
        load_dataset(path)


def test_load_dataset_header_flag(tmp_path):
    path = tmp_path / "h.csv"
    path.write_text("a,b\n0,1\n")
    with pytest.raises(ValueError):
        load_dataset(path)
    data = load_dataset(path, allow_header=True)
    assert data.n_rows == 1


def test_reference_dataset_roundtrip(tmp_path):
    data = generate_reference_dataset()
    assert data.rows.shape == (20, 6)
    path = tmp_path / "ref.csv"
    save_dataset(data, path)
    again = load_dataset(path)
    assert np.array_equal(again.rows, data.rows)
    save_dataset(again, tmp_path / "ref2.csv")
    assert (tmp_path / "ref.csv").read_text() == (tmp_path / "ref2.csv").read_text()


def test_reference_dataset_deterministic():
    a = generate_reference_dataset()
    b = generate_reference_dataset()
    assert np.array_equal(a.rows, b.rows)


def test_dag_validation():
    cyc = np.zeros((3, 3), dtype=np.uint8)
    cyc[0, 1] = cyc[1, 0] = 1
    with pytest.raises(ValueError):
        Dag(cyc)
    with pytest.raises(ValueError):
        BmaConfig(0.0)
    with pytest.raises(ValueError):
        BinaryDataset(np.array([[0, 2]], dtype=np.int64))


def test_multi_edge_traces_consistent(backend):
    data = generate_reference_dataset()
    kernel = mh_dag_kernel(data, BmaConfig(4.0))
    edges = [(0, 1), (0, 3)]
    rng = Xoshiro256pp(12)
    x0 = empty_dag_sampler(6)(rng)
    values = kernel.simulator.run_trace_multi(x0, 500, rng, edges)
    assert values.shape == (2, 500)
    # single-edge trace from the same stream matches row 0
    rng2 = Xoshiro256pp(12)
    x0b = empty_dag_sampler(6)(rng2)
    single = simulate_trace(kernel, x0b, edge_indicator(0, 1), 500, rng2)
    assert np.array_equal(values[0], single)
