"""Curie-Weiss and Ising spin models with Glauber and Metropolis kernels.

Target law: P(w) proportional to exp(H(w)) with

  mean-field:  H(w) = (beta/n_s) * sum_{i<j} w_i w_j + h * sum_i w_i
  lattice:     H(w) = beta * sum_{edges (i,j)} w_i w_j + h * sum_i w_i

(note the plus sign in the exponent; the analytic gap formulas and all
figure-style parameter values assume this convention).  Lattices are
periodic; 2D sites are row-major, site (r, c) <-> r*L + c.

States are int8 arrays of +-1 spins.  Single-site conditionals take only a
handful of values (the integer neighbor sum), so the kernels precompute
probability tables once and the hot loops do table lookups.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .chain import Kernel
from .rng import Xoshiro256pp, fold_in

CURIE_WEISS = "curie_weiss"
ISING_1D = "ising1d"
ISING_2D = "ising2d"
_FAMILIES = (CURIE_WEISS, ISING_1D, ISING_2D)

_GLAUBER_RANDOM = 0
_GLAUBER_SYSTEMATIC = 1
_METROPOLIS = 2


@dataclass(frozen=True)
class SpinModel:
    family: str
    n_s: int
    beta: float
    h: float = 0.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.n_s < 1:
            raise ValueError("n_s must be >= 1")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.family == ISING_1D and self.n_s < 2:
            raise ValueError("ising1d needs n_s >= 2")
        if self.family == ISING_2D:
            side = math.isqrt(self.n_s)
            if side * side != self.n_s or side < 2:
                raise ValueError("ising2d needs n_s a perfect square, side >= 2")

    @property
    def side(self) -> int:
        return math.isqrt(self.n_s)

    @property
    def coupling(self) -> float:
        """Coefficient of the pairwise term in the local field."""
        return self.beta / self.n_s if self.family == CURIE_WEISS else self.beta


def neighbor_table(model: SpinModel) -> np.ndarray | None:
    """Periodic lattice neighbors per site; None for the mean-field model."""
    if model.family == CURIE_WEISS:
        return None
    n = model.n_s
    if model.family == ISING_1D:
        idx = np.arange(n)
        return np.stack([(idx - 1) % n, (idx + 1) % n], axis=1).astype(np.int64)
    ell = model.side
    r, c = np.divmod(np.arange(n), ell)
    return np.stack(
        [
            ((r - 1) % ell) * ell + c,
            ((r + 1) % ell) * ell + c,
            r * ell + (c - 1) % ell,
            r * ell + (c + 1) % ell,
        ],
        axis=1,
    ).astype(np.int64)


def _check_config(model: SpinModel, w: np.ndarray) -> np.ndarray:
    w = np.asarray(w)
    if w.shape != (model.n_s,):
        raise ValueError(f"configuration length {w.shape} does not match n_s={model.n_s}")
    if not np.all(np.abs(w) == 1):
        raise ValueError("spins must be exactly -1 or +1")
    return w.astype(np.int8)


def energy(model: SpinModel, w: np.ndarray) -> float:
    """Exact energy H(w)."""
    w = _check_config(model, w)
    mag = int(w.sum())
    if model.family == CURIE_WEISS:
        pair = (mag * mag - model.n_s) / 2.0
        return model.beta / model.n_s * pair + model.h * mag
    nbr = neighbor_table(model)
    pair = int((w[:, None].astype(np.int64) * w[nbr]).sum()) / 2.0
    return model.beta * pair + model.h * mag


def local_field_sum(model: SpinModel, w: np.ndarray, site: int) -> int:
    """Integer spin sum entering site's conditional (all others / neighbors)."""
    if model.family == CURIE_WEISS:
        return int(w.sum()) - int(w[site])
    nbr = neighbor_table(model)
    return int(w[nbr[site]].sum())

def conditional_plus_probability(model: SpinModel, w: np.ndarray, site: int) -> float:
    """Exact conditional probability that a resampled spin at ``site`` is +1.

    Equals exp(m)/(exp(m)+exp(-m)) with m = coupling * (spin sum) + h, which
    is the conditional of P(w) ~ exp(H(w)); equivalently
    1/(1 + exp(-(H(w+) - H(w-)))).
    """
    w = _check_config(model, w)
    if not 0 <= site < model.n_s:
        raise ValueError(f"site {site} out of range 0..{model.n_s - 1}")
    m = model.coupling * local_field_sum(model, w, site) + model.h
    return 0.5 * (1.0 + math.tanh(m))


def magnetization(w: np.ndarray) -> int:
    """Total magnetization sum_i w_i."""
    return int(np.sum(w))


def sign_magnetization(w: np.ndarray) -> int:
    """Sign of the total magnetization, with sign(0) = 0."""
    m = int(np.sum(w))
    return (m > 0) - (m < 0)


magnetization.observable_id = "spin_magnetization"
sign_magnetization.observable_id = "spin_sign"
_OBS_CODES = {"spin_magnetization": 1, "spin_sign": 2}


def observable_bound(observable, model: SpinModel) -> float:
    """Uniform bound C on |f - mean(f)| for the built-in spin observables."""
    code = _OBS_CODES.get(getattr(observable, "observable_id", None))
    if code == 1:
        return float(model.n_s)
    if code == 2:
        return 1.0
    raise ValueError("no known bound for this observable")


def uniform_spin_sampler(model: SpinModel):
    """Initial distribution: i.i.d. fair-coin spins (uniform over states)."""
    n_s = model.n_s

    def sample(rng: Xoshiro256pp) -> np.ndarray:
        w = np.empty(n_s, dtype=np.int8)
        for j in range(n_s):
            w[j] = 1 if rng.uniform() < 0.5 else -1
        return w

    return sample


def _tables(model: SpinModel) -> tuple[np.ndarray, np.ndarray, int]:
    """(p_plus, metropolis_accept, offset) indexed by (spin_sum+offset)>>1."""
    if model.family == CURIE_WEISS:
        sums = np.arange(-(model.n_s - 1), model.n_s, 2)
        offset = model.n_s - 1
    else:
        deg = 2 if model.family == ISING_1D else 4
        sums = np.arange(-deg, deg + 1, 2)
        offset = deg
    fields = model.coupling * sums + model.h
    p_plus = 0.5 * (1.0 + np.tanh(fields))
    acc = np.empty((2, len(sums)))
    for si, spin in enumerate((-1, 1)):
        dh = -2.0 * spin * fields
        acc[si] = np.where(dh >= 0, 1.0, np.exp(np.minimum(dh, 0.0)))
    return p_plus, acc, offset


class _SpinSimulator:
    """Fast bulk paths for one (model, kernel kind) pair."""

    def __init__(self, model: SpinModel, kind: int):
        self.model = model
        self.kind = kind
        self.p_plus, self.acc, self.offset = _tables(model)
        nbr = neighbor_table(model)
        self.family_code = 0 if model.family == CURIE_WEISS else 1
        self.nbr = np.zeros((1, 1), dtype=np.int64) if nbr is None else nbr

    @staticmethod
    def _obs_code(observable) -> int | None:
        return _OBS_CODES.get(getattr(observable, "observable_id", None))

    def _jit_run(self, w, n, t0, rng, obs, record, values):
        from . import _jit

        state = rng.state
        out = _jit.spin_run(
            self.family_code, self.kind, w, self.nbr, self.offset,
            self.p_plus, self.acc, n, t0, state, obs, record, values,
        )
        rng.set_state(state)
        return out

    def run_trace(self, initial, n, rng, observable):
        from .backend import use_numba

        obs = self._obs_code(observable)
        if obs is None:
            return None
        w = _check_config(self.model, initial).copy()
        if use_numba():
            values = np.empty(n, dtype=np.float64)
            self._jit_run(w, n, n, rng, obs, True, values)
            return values
        from ._lockstep import spin_lockstep

        states = rng.state.reshape(1, 4)
        _, _, values = spin_lockstep(
            self.family_code, self.kind, self.nbr, self.offset, self.p_plus,
            self.acc, w.reshape(1, -1), n, n, states, obs, True,
        )
        rng.set_state(states[0])
        return values[0]

    def run_average(self, initial, n, t0, rng, observable):
        from .backend import use_numba

        obs = self._obs_code(observable)
        if obs is None:
            return None
        w = _check_config(self.model, initial).copy()
        if use_numba():
            dummy = np.empty(1, dtype=np.float64)
            total, f = self._jit_run(w, n, t0, rng, obs, False, dummy)
            return total / (n - t0), f
        from ._lockstep import spin_lockstep

        states = rng.state.reshape(1, 4)
        totals, finals, _ = spin_lockstep(
            self.family_code, self.kind, self.nbr, self.offset, self.p_plus,
            self.acc, w.reshape(1, -1), n, t0, states, obs, False,
        )
        rng.set_state(states[0])
        return totals[0] / (n - t0), finals[0]

    def parallel_averages(self, initial_sampler, n_chains, n, t0, base_seed, observable):
        from .backend import use_numba

        obs = self._obs_code(observable)
        if obs is None:
            return None
        rngs = [Xoshiro256pp(fold_in(base_seed, i)) for i in range(n_chains)]
        inits = [initial_sampler(r) for r in rngs]
        if use_numba():
            means = np.empty(n_chains)
            finals = np.empty(n_chains)
            for i, (rng, w0) in enumerate(zip(rngs, inits)):
                means[i], finals[i] = self.run_average(w0, n, t0, rng, observable)
            return means, finals
        from ._lockstep import spin_lockstep

        w = np.stack([_check_config(self.model, w0) for w0 in inits])
        states = np.stack([r.state for r in rngs])
        totals, finals, _ = spin_lockstep(
            self.family_code, self.kind, self.nbr, self.offset, self.p_plus,
            self.acc, w, n, t0, states, obs, False,
        )
        return totals / (n - t0), finals


def _make_kernel(model: SpinModel, kind: int, reversible: bool) -> Kernel:
    p_plus, acc, offset = _tables(model)
    nbr = neighbor_table(model)
    n_s = model.n_s
    is_cw = model.family == CURIE_WEISS

    def resample(w, site, u):
        loc = (int(w.sum()) - int(w[site])) if is_cw else int(w[nbr[site]].sum())
        w[site] = 1 if u < p_plus[(loc + offset) >> 1] else -1

    if kind == _GLAUBER_RANDOM:

        def step(w, rng):
            w = w.copy()
            site = int(rng.uniform() * n_s)
            resample(w, site, rng.uniform())
            return w

    elif kind == _GLAUBER_SYSTEMATIC:

        def step(w, rng):
            w = w.copy()
            for site in range(n_s):
                resample(w, site, rng.uniform())
            return w

    else:

        def step(w, rng):
            w = w.copy()
            site = int(rng.uniform() * n_s)
            u = rng.uniform()
            loc = (int(w.sum()) - int(w[site])) if is_cw else int(w[nbr[site]].sum())
            if u < acc[(int(w[site]) + 1) >> 1, (loc + offset) >> 1]:
                w[site] = -w[site]
            return w

    return Kernel(
        step=step,
        is_reversible=reversible,
        state_descriptor="spin",
        simulator=_SpinSimulator(model, kind),
        canonical_initial_sampler=uniform_spin_sampler(model),
    )


def glauber_random_scan_kernel(model: SpinModel) -> Kernel:
    """Single-site heat-bath resampling at a uniformly random site (reversible)."""
    return _make_kernel(model, _GLAUBER_RANDOM, reversible=True)


def glauber_systematic_scan_kernel(model: SpinModel) -> Kernel:
    """One step = one full ascending sweep of heat-bath updates (non-reversible)."""
    return _make_kernel(model, _GLAUBER_SYSTEMATIC, reversible=False)


def metropolis_spin_flip_kernel(model: SpinModel) -> Kernel:
    """Uniform site choice, spin-flip proposal, accept with min{1, exp(dH)}."""
    return _make_kernel(model, _METROPOLIS, reversible=True)


# ---------------------------------------------------------------------------
# Exact small-system diagnostics (state spaces up to 2^20).
# ---------------------------------------------------------------------------


def enumerate_configurations(n_s: int) -> np.ndarray:
    """All spin configurations as a (2^n_s, n_s) int8 matrix (bit i = site i)."""
    if n_s > 20:
        raise ValueError("state space too large to enumerate")
    idx = np.arange(1 << n_s)[:, None]
    bits = (idx >> np.arange(n_s)) & 1
    return (2 * bits - 1).astype(np.int8)


def stationary_weights(model: SpinModel) -> np.ndarray:
    """Normalized stationary probabilities over the enumerated state space."""
    configs = enumerate_configurations(model.n_s)
    logw = np.array([energy(model, w) for w in configs])
    logw -= logw.max()
    w = np.exp(logw)
    return w / w.sum()


def exact_transition_matrix(model: SpinModel, kernel_kind: str) -> np.ndarray:
    """Explicit transition matrix over the enumerated state space.

    ``kernel_kind``: "glauber_random", "glauber_systematic" or "metropolis".
    Rows/columns follow :func:`enumerate_configurations` order.
    """
    configs = enumerate_configurations(model.n_s)
    n_states = len(configs)
    n_s = model.n_s
    p_plus, acc, offset = _tables(model)

    def flip_index(i: int, site: int) -> int:
        return i ^ (1 << site)

    def site_matrix(site: int) -> np.ndarray:
        p = np.zeros((n_states, n_states))
        for i, w in enumerate(configs):
            loc = local_field_sum(model, w, site)
            pp = p_plus[(loc + offset) >> 1]
            j_plus = i | (1 << site)
            j_minus = i & ~(1 << site)
            p[i, j_plus] += pp
            p[i, j_minus] += 1.0 - pp
        return p

    if kernel_kind == "glauber_systematic":
        p = np.eye(n_states)
        for site in range(n_s):
            p = p @ site_matrix(site)
        return p
    if kernel_kind == "glauber_random":
        p = np.zeros((n_states, n_states))
        for site in range(n_s):
            p += site_matrix(site)
        return p / n_s
    if kernel_kind == "metropolis":
        p = np.zeros((n_states, n_states))
        for i, w in enumerate(configs):
            for site in range(n_s):
                loc = local_field_sum(model, w, site)
                a = acc[(int(w[site]) + 1) >> 1, (loc + offset) >> 1]
                j = flip_index(i, site)
                p[i, j] += a / n_s
                p[i, i] += (1.0 - a) / n_s
        return p
    raise ValueError(f"unknown kernel kind {kernel_kind!r}")
