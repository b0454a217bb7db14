"""Data-driven estimators of the parameters entering the tail bounds.

Given a single estimation trace f(X_{t0+1}), ..., f(X_N):

  * variance: mean of squares minus squared mean over the window,
  * asymptotic variance: windowed autocovariance sum
      (g_0 + 2 sum_{i<=k} g_i) * (N - t0 + k + 1) / (N - t0 - k),
    where the lag-i autocovariance uses the product sum over
    j = t0+1 .. N-k and subtracts half the squared mean of each factor
    window,
  * spectral gap: 2 V / sigma2 (reversible), 4 V / sigma2 (pseudo gap,
    non-reversible), minimized over observables when several are given,
  * mixing time: 1/gap, or 2/gap for the pseudo gap.

Default window policy: t0 = floor(0.1 N), k = 10 * floor(N^(1/3)).

All estimators are invariant under adding a constant to the trace, and the
implementation centers the window first so that this holds numerically,
not just algebraically.  Autocovariances are direct O(N k) summation with
compensated accumulation (Kahan in the jitted path, pairwise/BLAS in the
numpy path).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .backend import use_numba


class EstimationError(RuntimeError):
    """Estimation failed in a way more data would fix (e.g. sigma2 <= 0)."""


def _values(trace) -> np.ndarray:
    v = trace.values if hasattr(trace, "values") else trace
    return np.asarray(v, dtype=np.float64)


def _icbrt(n: int) -> int:
    r = round(n ** (1.0 / 3.0))
    while (r + 1) ** 3 <= n:
        r += 1
    while r**3 > n:
        r -= 1
    return r


def default_window_policy(n_hat: int) -> tuple[int, int]:
    """(t0_hat, k) = (floor(0.1 N), 10 floor(N^(1/3))); errors when infeasible."""
    if n_hat < 2:
        raise ValueError("n_hat too small")
    t0_hat = n_hat // 10
    k = 10 * _icbrt(n_hat)
    if not 1 <= k <= n_hat - t0_hat - 1:
        raise ValueError(
            f"default policy infeasible for n_hat={n_hat}: "
            f"k={k} not in [1, {n_hat - t0_hat - 1}]"
        )
    return t0_hat, k


def empirical_variance(trace, t0_hat: int) -> float:
    """Variance of the observable over the window t0+1..N (>= 0)."""
    v = _values(trace)
    n = len(v)
    if not 0 <= t0_hat <= n - 2:
        raise ValueError(f"need at least 2 values after burn-in, got {n - t0_hat}")
    w = v[t0_hat:]
    mu = w.mean()
    return float(np.mean((w - mu) ** 2))


def _autocov_block_numpy(x: np.ndarray, t0: int, k: int) -> np.ndarray:
    n = len(x)
    d = n - t0 - k
    lead = x[t0 : n - k]
    mean_a = lead.sum() / d
    out = np.empty(k + 1)
    for i in range(k + 1):
        seg = x[t0 + i : n - k + i]
        out[i] = lead @ seg / d - 0.5 * mean_a**2 - 0.5 * (seg.sum() / d) ** 2
    return out


def _autocov_block(v: np.ndarray, t0: int, k: int) -> np.ndarray:
    # center on the burn-in window; the estimator is exactly shift invariant,
    # so this only improves conditioning
    x = v - v[t0:].mean()
    if use_numba():
        from . import _jit

        return _jit.autocov_block(x, t0, k)
    return _autocov_block_numpy(x, t0, k)


def autocovariance(trace, t0_hat: int, k: int, i: int) -> float:
    """Lag-i windowed autocovariance (the estimator's exact index ranges)."""
    v = _values(trace)
    n = len(v)
    if not 0 <= i <= k:
        raise ValueError(f"need 0 <= i <= k, got i={i}, k={k}")
    if n - t0_hat - k < 2:
        raise ValueError("window too short: need N - t0 - k >= 2")
    x = v - v[t0_hat:].mean()
    d = n - t0_hat - k
    lead = x[t0_hat : n - k]
    seg = x[t0_hat + i : n - k + i]
    return float(lead @ seg / d - 0.5 * (lead.sum() / d) ** 2 - 0.5 * (seg.sum() / d) ** 2)


def asymptotic_variance(trace, t0_hat: int, k: int) -> float:
    """Windowed estimate of the asymptotic variance; may be negative.

    A negative value (possible for short runs) is returned as-is with a
    RuntimeWarning rather than clamped; the gap estimator refuses it.
    """
    v = _values(trace)
    n = len(v)
    if not 1 <= k <= n - t0_hat - 1:
        raise ValueError(f"need 1 <= k <= N - t0 - 1, got k={k}")
    g = _autocov_block(v, t0_hat, k)
    total = g[0] + 2.0 * math.fsum(g[1:])
    out = total * (n - t0_hat + k + 1) / (n - t0_hat - k)
    if out < 0:
        warnings.warn(
            "asymptotic variance estimate is negative; the run is too short",
            RuntimeWarning,
            stacklevel=2,
        )
    return float(out)


def spectral_gap_estimate(pairs, reversible: bool) -> float:
    """Gap estimate min over observables of 2V/sigma2 (4V/sigma2 if non-rev).

    ``pairs``: iterable of (variance, asymptotic variance) tuples, one per
    observable.  Raises :class:`EstimationError` when any asymptotic
    variance is nonpositive.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("need at least one (variance, asymptotic variance) pair")
    factor = 2.0 if reversible else 4.0
    ratios = []
    for v_hat, s2 in pairs:
        if not s2 > 0:
            raise EstimationError(
                "nonpositive asymptotic variance estimate; increase the "
                "estimation run length"
            )
        ratios.append(factor * v_hat / s2)
    return min(1.0, min(ratios))


def mixing_time_estimate(gap: float, reversible: bool) -> float:
    """1/gap for reversible chains, 2/gap (pseudo gap) otherwise."""
    if not 0 < gap <= 1:
        raise ValueError(f"gap must be in (0, 1], got {gap}")
    return (1.0 if reversible else 2.0) / gap


@dataclass(frozen=True)
class EstimatorReport:
    """Everything estimated from one trace, plus the supplied bound C."""

    v_hat: float
    sigma2_hat: float
    k: int
    n_hat: int
    t0_hat: int
    gamma_hat: float
    tmix_hat: float
    reversible: bool
    c_bound: float

    @property
    def tmix_display(self) -> int:
        """Mixing time floored to an integer (report/caption style)."""
        return math.floor(self.tmix_hat)

    def to_text(self) -> str:
        lines = [
            f"v_hat = {self.v_hat!r}",
            f"sigma2_hat = {self.sigma2_hat!r}",
            f"k = {self.k}",
            f"n_hat = {self.n_hat}",
            f"t0_hat = {self.t0_hat}",
            f"gamma_hat = {self.gamma_hat!r}",
            f"tmix_hat = {self.tmix_hat!r}",
            f"reversible = {self.reversible}",
            f"c_bound = {self.c_bound!r}",
        ]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EstimatorReport":
        kv = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            kv[key.strip()] = val.strip()
        return cls(
            v_hat=float(kv["v_hat"]),
            sigma2_hat=float(kv["sigma2_hat"]),
            k=int(kv["k"]),
            n_hat=int(kv["n_hat"]),
            t0_hat=int(kv["t0_hat"]),
            gamma_hat=float(kv["gamma_hat"]),
            tmix_hat=float(kv["tmix_hat"]),
            reversible=kv["reversible"] == "True",
            c_bound=float(kv["c_bound"]),
        )


def estimate_parameters(
    traces,
    reversible: bool,
    c_bound: float,
    t0_hat: int | None = None,
    k: int | None = None,
) -> list[EstimatorReport]:
    """Fit reports for one or more same-length traces of one chain run.

    The gap (and mixing time) is shared: the minimum of the per-observable
    ratios.  Window overrides fall back to the default policy.
    """
    value_arrays = [_values(t) for t in traces]
    if not value_arrays:
        raise ValueError("need at least one trace")
    n_hat = len(value_arrays[0])
    if any(len(v) != n_hat for v in value_arrays):
        raise ValueError("all traces must have the same length")
    if t0_hat is None or k is None:
        t0_default, k_default = default_window_policy(n_hat)
        t0_hat = t0_default if t0_hat is None else t0_hat
        k = k_default if k is None else k
    pairs = [
        (empirical_variance(v, t0_hat), asymptotic_variance(v, t0_hat, k))
        for v in value_arrays
    ]
    gap = spectral_gap_estimate(pairs, reversible)
    tmix = mixing_time_estimate(gap, reversible)
    return [
        EstimatorReport(
            v_hat=v_hat,
            sigma2_hat=s2,
            k=k,
            n_hat=n_hat,
            t0_hat=t0_hat,
            gamma_hat=gap,
            tmix_hat=tmix,
            reversible=reversible,
            c_bound=c_bound,
        )
        for v_hat, s2 in pairs
    ]
