"""Markov-kernel abstraction and seeded chain drivers.

A :class:`Kernel` owns a pure ``step(state, rng) -> state`` function; for
the built-in model families it also carries a simulator object with fast
bulk paths (numba or vectorized numpy, chosen by the backend flag).  All
drivers are deterministic given seeds: chain ``i`` of a parallel batch uses
the stream ``fold_in(base_seed, i)``, so results never depend on execution
order or thread count.

Traces store observable values only, never states: every downstream
estimator consumes ``f(X_i)``, and storing states for large parallel
batches would be infeasible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Callable

import numpy as np

from .rng import Xoshiro256pp, fold_in


@dataclass(frozen=True)
class Trace:
    """Observable values f(X_1), ..., f(X_N) of one chain.

    ``burn_in`` and ``spacing`` describe how ``values`` relates to the
    underlying chain of ``n_total`` steps:
    ``len(values) == (n_total - burn_in) // spacing``.
    """

    values: np.ndarray
    n_total: int
    burn_in: int = 0
    spacing: int = 1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.burn_in < 0 or self.spacing < 1 or self.n_total <= self.burn_in:
            raise ValueError("require burn_in >= 0, spacing >= 1, n_total > burn_in")
        expect = (self.n_total - self.burn_in) // self.spacing
        if len(self.values) != expect:
            raise ValueError(
                f"trace has {len(self.values)} values, expected {expect} "
                f"from (n_total={self.n_total}, burn_in={self.burn_in}, "
                f"spacing={self.spacing})"
            )


@dataclass(frozen=True)
class Kernel:
    """A Markov transition kernel.

    ``step`` must be a pure function of (state, rng stream position): the
    same state and the same stream position always produce the same next
    state, and the input state is never mutated.
    """

    step: Callable[[Any, Xoshiro256pp], Any]
    is_reversible: bool
    state_descriptor: str
    simulator: Any = None
    canonical_initial_sampler: Callable[[Xoshiro256pp], Any] | None = field(
        default=None, compare=False
    )


def _python_trace(kernel: Kernel, state, observable, n: int, rng) -> np.ndarray:
    values = np.empty(n, dtype=np.float64)
    for t in range(n):
        state = kernel.step(state, rng)
        values[t] = observable(state)
    return values


def simulate_trace(kernel: Kernel, initial, observable, n: int, rng) -> np.ndarray:
    """Advance ``n`` steps from ``initial`` consuming ``rng``; return f values.

    Dispatches to the kernel's fast simulator when one exists for this
    observable and backend, otherwise runs the generic Python loop.  Both
    paths consume the stream identically.
    """
    if kernel.simulator is not None:
        values = kernel.simulator.run_trace(initial, n, rng, observable)
        if values is not None:
            return values
    return _python_trace(kernel, initial, observable, n, rng)


def run_chain(kernel: Kernel, initial, observable, n: int, seed: int) -> Trace:
    """Run one chain of ``n`` steps from ``initial``; deterministic in ``seed``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = Xoshiro256pp(seed)
    values = simulate_trace(kernel, initial, observable, n, rng)
    return Trace(values=values, n_total=n, burn_in=0, spacing=1, seed=seed)


def apply_burn_in(trace: Trace, t0: int) -> Trace:
    """Drop the first ``t0`` recorded values."""
    if t0 < 0:
        raise ValueError("t0 must be >= 0")
    if t0 >= len(trace.values) or t0 >= trace.n_total:
        raise ValueError(f"t0={t0} leaves no values (trace length {len(trace.values)})")
    if t0 == 0:
        return trace
    return replace(
        trace,
        values=trace.values[t0:],
        burn_in=trace.burn_in + t0 * trace.spacing,
    )


def subsample(trace: Trace, m: int) -> Trace:
    """Keep every m-th value (positions m, 2m, 3m, ... of the trace)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if m == 1:
        return trace
    return replace(trace, values=trace.values[m - 1 :: m], spacing=trace.spacing * m)


def parallel_traces(
    kernel: Kernel,
    initial_sampler: Callable[[Xoshiro256pp], Any],
    n_chains: int,
    n: int,
    base_seed: int,
    observable,
) -> list[Trace]:
    """Run ``n_chains`` independent chains; chain i uses fold_in(base_seed, i).

    Each chain's stream first feeds ``initial_sampler`` and then the chain
    steps, so the whole batch is reproducible and independent of execution
    order.
    """
    if n_chains < 1:
        raise ValueError("n_chains must be >= 1")
    if n < 1:
        raise ValueError("n must be >= 1")
    traces = []
    for i in range(n_chains):
        seed_i = fold_in(base_seed, i)
        rng = Xoshiro256pp(seed_i)
        x0 = initial_sampler(rng)
        values = simulate_trace(kernel, x0, observable, n, rng)
        traces.append(Trace(values=values, n_total=n, burn_in=0, spacing=1, seed=seed_i))
    return traces


def parallel_averages(
    kernel: Kernel,
    initial_sampler: Callable[[Xoshiro256pp], Any],
    n_chains: int,
    n: int,
    t0: int,
    base_seed: int,
    observable,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-chain empirical averages over steps t0+1..n, plus final f values.

    Memory-safe driver for large batches: nothing but the running sums is
    kept.  Seeds and stream consumption match :func:`parallel_traces`
    exactly, so the two agree on common prefixes.
    """
    if n_chains < 1:
        raise ValueError("n_chains must be >= 1")
    if not 0 <= t0 < n:
        raise ValueError("require 0 <= t0 < n")
    sim = kernel.simulator
    if sim is not None:
        out = sim.parallel_averages(initial_sampler, n_chains, n, t0, base_seed, observable)
        if out is not None:
            return out
    means = np.empty(n_chains)
    finals = np.empty(n_chains)
    for i in range(n_chains):
        rng = Xoshiro256pp(fold_in(base_seed, i))
        state = initial_sampler(rng)
        total = 0.0
        f = np.nan
        for t in range(n):
            state = kernel.step(state, rng)
            f = observable(state)
            if t >= t0:
                total += f
        means[i] = total / (n - t0)
        finals[i] = f
    return means, finals


def final_state_samples(
    kernel: Kernel,
    initial_sampler: Callable[[Xoshiro256pp], Any],
    n_chains: int,
    n: int,
    base_seed: int,
    observable,
) -> np.ndarray:
    """One terminal observable value f(X_N) per chain (n=0 gives f(initial))."""
    if n_chains < 1:
        raise ValueError("n_chains must be >= 1")
    if n < 0:
        raise ValueError("n must be >= 0")
    if n == 0:
        out = np.empty(n_chains)
        for i in range(n_chains):
            rng = Xoshiro256pp(fold_in(base_seed, i))
            out[i] = observable(initial_sampler(rng))
        return out
    _, finals = parallel_averages(
        kernel, initial_sampler, n_chains, n, n - 1, base_seed, observable
    )
    return finals


def final_state_penalty(n_chains: int, epsilon: float) -> float:
    """Coupling penalty for treating the terminal samples as i.i.d. draws.

    ``epsilon`` bounds the total-variation distance between the time-N law
    and stationarity; the i.i.d. tail bound then degrades by
    ``n_chains * epsilon``.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    return n_chains * epsilon


# ---------------------------------------------------------------------------
# Finite state-space kernels (explicit transition matrix).
# ---------------------------------------------------------------------------


class _FiniteSimulator:
    def __init__(self, cum: np.ndarray):
        self._cum = cum

    def _fvec(self, observable) -> np.ndarray | None:
        fv = getattr(observable, "finite_values", None)
        if fv is None or len(fv) != self._cum.shape[0]:
            return None
        return np.asarray(fv, dtype=np.float64)

    def run_trace(self, initial, n, rng, observable):
        from .backend import use_numba

        fv = self._fvec(observable)
        if fv is None or not use_numba():
            return None
        from . import _jit

        state = rng.state
        values = np.empty(n, dtype=np.float64)
        _jit.finite_run(self._cum, fv, int(initial), n, n, state, True, values)
        rng.set_state(state)
        return values

    def run_average(self, initial, n, t0, rng, observable):
        from .backend import use_numba

        fv = self._fvec(observable)
        if fv is None or not use_numba():
            return None
        from . import _jit

        state = rng.state
        dummy = np.empty(1, dtype=np.float64)
        total, f, _ = _jit.finite_run(self._cum, fv, int(initial), n, t0, state, False, dummy)
        rng.set_state(state)
        return total / (n - t0), f

    def parallel_averages(self, initial_sampler, n_chains, n, t0, base_seed, observable):
        from .backend import use_numba

        fv = self._fvec(observable)
        if fv is None or not use_numba():
            return None
        means = np.empty(n_chains)
        finals = np.empty(n_chains)
        for i in range(n_chains):
            rng = Xoshiro256pp(fold_in(base_seed, i))
            x0 = initial_sampler(rng)
            means[i], finals[i] = self.run_average(x0, n, t0, rng, observable)
        return means, finals


def vector_observable(values) -> Callable[[int], float]:
    """Observable over finite states given as a value-per-state vector."""
    fv = np.asarray(values, dtype=np.float64)

    def f(state: int) -> float:
        return float(fv[state])

    f.finite_values = fv
    return f


def finite_matrix_kernel(p: np.ndarray, reversible: bool | None = None) -> Kernel:
    """Kernel for an explicit row-stochastic transition matrix.

    ``reversible`` defaults to a detailed-balance check against the
    stationary distribution of ``p``.
    """
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError("p must be a square matrix")
    if np.any(p < 0) or not np.allclose(p.sum(axis=1), 1.0, atol=1e-12):
        raise ValueError("p must be row-stochastic")
    cum = np.cumsum(p, axis=1)
    cum[:, -1] = 1.0
    if reversible is None:
        reversible = _is_reversible_matrix(p)

    def step(state: int, rng: Xoshiro256pp) -> int:
        u = rng.uniform()
        row = cum[state]
        j = 0
        while u >= row[j]:
            j += 1
        return j

    return Kernel(
        step=step,
        is_reversible=reversible,
        state_descriptor="finite",
        simulator=_FiniteSimulator(cum),
    )


def stationary_distribution(p: np.ndarray) -> np.ndarray:
    """Stationary distribution of a row-stochastic matrix (left eigenvector)."""
    p = np.asarray(p, dtype=np.float64)
    vals, vecs = np.linalg.eig(p.T)
    i = int(np.argmin(np.abs(vals - 1.0)))
    pi = np.real(vecs[:, i])
    pi = np.abs(pi)
    return pi / pi.sum()


def _is_reversible_matrix(p: np.ndarray) -> bool:
    pi = stationary_distribution(p)
    flux = pi[:, None] * p
    return bool(np.allclose(flux, flux.T, atol=1e-12))
