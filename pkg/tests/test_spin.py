import math

import numpy as np
import pytest

from mcmcbounds.chain import run_chain
from mcmcbounds.rng import Xoshiro256pp
from mcmcbounds.spin import (
    SpinModel,
    conditional_plus_probability,
    energy,
    enumerate_configurations,
    exact_transition_matrix,
    glauber_random_scan_kernel,
    glauber_systematic_scan_kernel,
    magnetization,
    metropolis_spin_flip_kernel,
    neighbor_table,
    observable_bound,
    sign_magnetization,
    stationary_weights,
    uniform_spin_sampler,
)

KINDS = ("glauber_random", "glauber_systematic", "metropolis")
MAKERS = {
    "glauber_random": glauber_random_scan_kernel,
    "glauber_systematic": glauber_systematic_scan_kernel,
    "metropolis": metropolis_spin_flip_kernel,
}


def _brute_force_energy(model, w):
    # direct edge enumeration, independent of the packaged energy code
    total = model.h * float(np.sum(w))
    if model.family == "curie_weiss":
        for i in range(model.n_s):
            for j in range(i + 1, model.n_s):
                total += model.beta / model.n_s * w[i] * w[j]
        return total
    if model.family == "ising1d":
        edges = [(i, (i + 1) % model.n_s) for i in range(model.n_s)]
    else:
        ell = model.side
        edges = []
        for r in range(ell):
            for c in range(ell):
                edges.append((r * ell + c, r * ell + (c + 1) % ell))
                edges.append((r * ell + c, ((r + 1) % ell) * ell + c))
    for i, j in edges:
        total += model.beta * w[i] * w[j]
    return total


def test_energy_curie_weiss_all_up():
    model = SpinModel("curie_weiss", 4, 1.0, 0.0)
    assert energy(model, np.ones(4, dtype=np.int8)) == pytest.approx(1.5)


def test_energy_ising1d_all_up_periodic():
    model = SpinModel("ising1d", 4, 1.0, 0.0)
    assert energy(model, np.ones(4, dtype=np.int8)) == pytest.approx(4.0)


def test_energy_ising2d_against_edge_enumeration():
    model = SpinModel("ising2d", 9, 0.5, 0.1)
    w = np.array([1, -1, 1, -1, 1, -1, 1, -1, 1], dtype=np.int8)
    assert energy(model, w) == pytest.approx(_brute_force_energy(model, w), abs=1e-12)


def test_energy_random_configs_all_families():
    rng = np.random.default_rng(0)
    for model in (
        SpinModel("curie_weiss", 7, 0.8, -0.2),
        SpinModel("ising1d", 6, 1.3, 0.4),
        SpinModel("ising2d", 16, 0.3, 0.0),
    ):
        for _ in range(20):
            w = rng.choice([-1, 1], size=model.n_s).astype(np.int8)
            assert energy(model, w) == pytest.approx(
                _brute_force_energy(model, w), abs=1e-10
            )


def test_energy_length_mismatch():
    with pytest.raises(ValueError):
        energy(SpinModel("curie_weiss", 4, 1.0), np.ones(3, dtype=np.int8))


def test_conditional_half_at_zero_field():
    model = SpinModel("ising1d", 4, 0.5, 0.0)
    w = np.array([1, 1, -1, -1], dtype=np.int8)  # site 1 neighbors sum to 0
    assert conditional_plus_probability(model, w, 2) == pytest.approx(0.5)


def test_conditional_two_aligned_neighbors():
    # both neighbors +1, beta=0.5, h=0: p = e/(e + 1/e) = 1/(1 + e^-4beta)
    model = SpinModel("ising1d", 4, 0.5, 0.0)
    w = np.array([1, -1, 1, 1], dtype=np.int8)
    p = conditional_plus_probability(model, w, 1)
    assert p == pytest.approx(math.e / (math.e + math.exp(-1)), rel=1e-12)
    assert p == pytest.approx(1.0 / (1.0 + math.exp(-4 * 0.5)), rel=1e-12)


def test_conditional_matches_energy_difference_oracle():
    rng = np.random.default_rng(1)
    models = [
        SpinModel("curie_weiss", 8, 0.6, 0.15),
        SpinModel("ising1d", 7, 1.1, -0.3),
        SpinModel("ising2d", 9, 0.4, 0.2),
    ]
    for _ in range(1000):
        model = models[rng.integers(len(models))]
        w = rng.choice([-1, 1], size=model.n_s).astype(np.int8)
        site = int(rng.integers(model.n_s))
        w_plus = w.copy()
        w_plus[site] = 1
        w_minus = w.copy()
        w_minus[site] = -1
        dh = energy(model, w_plus) - energy(model, w_minus)
        oracle = 1.0 / (1.0 + math.exp(-dh))
        assert conditional_plus_probability(model, w, site) == pytest.approx(
            oracle, abs=1e-12
        )


def test_conditional_site_out_of_range():
    model = SpinModel("curie_weiss", 4, 0.5)
    with pytest.raises(ValueError):
        conditional_plus_probability(model, np.ones(4, dtype=np.int8), 4)


def test_magnetization_and_sign():
    assert magnetization(np.ones(10, dtype=np.int8)) == 10
    assert sign_magnetization(np.ones(10, dtype=np.int8)) == 1
    mixed = np.array([1] * 5 + [-1] * 5, dtype=np.int8)
    assert magnetization(mixed) == 0
    assert sign_magnetization(mixed) == 0
    assert sign_magnetization(-np.ones(3, dtype=np.int8)) == -1


def test_observable_bounds():
    model = SpinModel("curie_weiss", 10, 0.5)
    assert observable_bound(magnetization, model) == 10.0
    assert observable_bound(sign_magnetization, model) == 1.0


def test_symmetric_mean_zero_exact():
    # h = 0: E m = E s = 0 under the stationary law, by symmetry
    for fam, n_s in (("curie_weiss", 3), ("ising1d", 4)):
        model = SpinModel(fam, n_s, 0.7, 0.0)
        pi = stationary_weights(model)
        configs = enumerate_configurations(n_s)
        mags = configs.sum(axis=1)
        assert abs(float(pi @ mags)) < 1e-14
        assert abs(float(pi @ np.sign(mags))) < 1e-14


def test_kernel_reversibility_flags():
    model = SpinModel("curie_weiss", 5, 0.5)
    assert glauber_random_scan_kernel(model).is_reversible
    assert metropolis_spin_flip_kernel(model).is_reversible
    assert not glauber_systematic_scan_kernel(model).is_reversible


@pytest.mark.parametrize("fam,n_s", [("curie_weiss", 2), ("curie_weiss", 3),
                                     ("ising1d", 3), ("ising1d", 4)])
@pytest.mark.parametrize("kind", KINDS)
def test_exact_stationarity(fam, n_s, kind):
    model = SpinModel(fam, n_s, 0.6, 0.25)
    pi = stationary_weights(model)
    p = exact_transition_matrix(model, kind)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert np.abs(pi @ p - pi).max() < 1e-12


@pytest.mark.parametrize("fam,n_s", [("curie_weiss", 3), ("ising1d", 4)])
@pytest.mark.parametrize("kind", ["glauber_random", "metropolis"])
def test_detailed_balance_reversible_kernels(fam, n_s, kind):
    model = SpinModel(fam, n_s, 0.9, -0.4)
    pi = stationary_weights(model)
    p = exact_transition_matrix(model, kind)
    flux = pi[:, None] * p
    assert np.abs(flux - flux.T).max() < 1e-12


def test_systematic_scan_breaks_detailed_balance():
    model = SpinModel("curie_weiss", 3, 0.8, 0.0)
    pi = stationary_weights(model)
    p = exact_transition_matrix(model, "glauber_systematic")
    flux = pi[:, None] * p
    assert np.abs(flux - flux.T).max() > 1e-4


def test_metropolis_single_site_acceptance():
    # one mean-field spin, h > 0: flipping -1 -> +1 always accepted,
    # +1 -> -1 accepted with probability exp(-2h)
    h = 0.7
    model = SpinModel("curie_weiss", 1, 0.5, h)
    p = exact_transition_matrix(model, "metropolis")
    # state 0 is spin -1, state 1 is spin +1
    assert p[0, 1] == pytest.approx(1.0)
    assert p[1, 0] == pytest.approx(math.exp(-2 * h), rel=1e-12)


def test_infinite_temperature_uniform_resampling(backend):
    # beta = h = 0: the chosen spin is resampled uniformly; spins decorrelate
    model = SpinModel("curie_weiss", 6, 0.0, 0.0)
    kernel = glauber_random_scan_kernel(model)
    p = exact_transition_matrix(model, "glauber_random")
    pi = stationary_weights(model)
    assert np.allclose(pi, 1.0 / 64)
    assert np.abs(pi @ p - pi).max() < 1e-14
    # empirical pair correlation vanishes within Monte Carlo error
    rng = Xoshiro256pp(3)
    w = uniform_spin_sampler(model)(rng)
    from mcmcbounds.chain import simulate_trace

    n = 20000
    corr = 0.0
    state = w
    step = kernel.step
    for _ in range(n):
        state = step(state, rng)
        corr += state[0] * state[1]
    assert abs(corr / n) < 4 / math.sqrt(n) * 2


def test_single_site_uniform_law(backend):
    # a single-site chain at beta=0 is an i.i.d. fair coin after each step
    model = SpinModel("curie_weiss", 1, 0.0, 0.0)
    kernel = glauber_random_scan_kernel(model)
    tr = run_chain(kernel, np.array([1], dtype=np.int8), magnetization, 40000, seed=2)
    assert abs(tr.values.mean()) < 4 / math.sqrt(40000)


def test_step_purity_no_mutation():
    model = SpinModel("ising1d", 6, 0.5, 0.1)
    for kind in KINDS:
        kernel = MAKERS[kind](model)
        w = np.ones(6, dtype=np.int8)
        before = w.copy()
        kernel.step(w, Xoshiro256pp(1))
        assert np.array_equal(w, before)


def test_neighbor_table_2d_row_major():
    model = SpinModel("ising2d", 9, 0.5)
    nbr = neighbor_table(model)
    # site (1,1) = index 4: neighbors (0,1)=1, (2,1)=7, (1,0)=3, (1,2)=5
    assert sorted(nbr[4].tolist()) == [1, 3, 5, 7]
    # site (0,0) = 0: wraps to (2,0)=6, (1,0)=3, (0,2)=2, (0,1)=1
    assert sorted(nbr[0].tolist()) == [1, 2, 3, 6]


def test_model_validation():
    with pytest.raises(ValueError):
        SpinModel("ising2d", 10, 0.5)  # not a perfect square
    with pytest.raises(ValueError):
        SpinModel("curie_weiss", 5, -0.1)
    with pytest.raises(ValueError):
        SpinModel("nope", 5, 0.5)
