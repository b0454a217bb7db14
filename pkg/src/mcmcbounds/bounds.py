"""Closed-form tail bounds for MCMC empirical averages and their helpers.

For the average Z over steps t0+1..N of a chain with spectral gap ``gap``
(pseudo spectral gap when non-reversible), observable variance ``v_f``,
asymptotic variance ``sigma2`` and uniform bound C on |f - mean|:

  Chebyshev (reversible):
      P(|Z - mean| >= t) <= (sigma2 + 4 v_f / (R gap^2)) / (R t^2) + B
  Chebyshev (non-reversible): 4 -> 16.
  Bernstein (reversible):
      P(|Z - mean| >= t) <= 2 exp(-R t^2 / (2(sigma2 + 0.8 v_f)
                                            + 10 t C / gap)) + B
  Bernstein (non-reversible):
      P(|Z - mean| >= t) <= 2 exp(-(R - 1/gap) t^2 gap
                                  / (8 v_f + 20 C t)) + B

where R = N - t0 for a single run, and with m parallel runs R becomes
m (N - t0) and the burn-in error B becomes m B.  B is the total-variation
distance of the time-t0 law from stationarity; two computable bounds on it
are provided (uniform ergodicity and spectral).

Probability bounds are capped at 1 before logging; curve objects also keep
the uncapped value for diagnostics.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import log_ndtr

E_OVER = (math.e - 1.0) / math.e  # guaranteed subsampled gap


@dataclass(frozen=True)
class BoundInputs:
    """Parameter bundle feeding every tail-bound formula."""

    v_f: float
    sigma2: float
    gap: float  # spectral gap, or pseudo spectral gap when not reversible
    tmix: float
    c: float
    n: int
    t0: int
    burn_in_error: float
    reversible: bool
    n_chains: int = 1

    def __post_init__(self):
        checks = [
            (self.v_f >= 0, "v_f must be >= 0"),
            (self.sigma2 >= 0, "sigma2 must be >= 0"),
            (0 < self.gap <= 1, "gap must be in (0, 1]"),
            (self.tmix > 0, "tmix must be > 0"),
            (self.c > 0, "c must be > 0"),
            (self.n > self.t0 >= 0, "need n > t0 >= 0"),
            (0 <= self.burn_in_error <= 1, "burn_in_error must be in [0, 1]"),
            (self.n_chains >= 1, "n_chains must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValueError(msg)
        for name in ("v_f", "sigma2", "gap", "tmix", "c", "burn_in_error"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @property
    def effective_samples(self) -> float:
        """m (N - t0): the sample count entering the bounds."""
        return self.n_chains * (self.n - self.t0)

    @property
    def effective_burn_in_error(self) -> float:
        return self.n_chains * self.burn_in_error


def burn_in_error_uniform(t0: int, tmix: float) -> float:
    """Burn-in error bound 2^(-floor(t0 / tmix)) for uniformly ergodic chains."""
    if t0 < 0:
        raise ValueError("t0 must be >= 0")
    if tmix <= 0:
        raise ValueError("tmix must be > 0")
    return min(1.0, 2.0 ** -math.floor(t0 / tmix))


def burn_in_error_spectral(t0: int, gap: float, chi2_contrast: float,
                           reversible: bool) -> float:
    """Spectral burn-in error bound from the chi^2 contrast of the start law.

    Reversible chains use the absolute spectral gap:
    (1/2) (1-gap)^t0 sqrt(Nq - 1); non-reversible chains use the pseudo gap
    with exponent (t0 - 1/gap)/2.  A point-mass start at x has
    Nq = 1/pi(x).
    """
    if t0 < 0:
        raise ValueError("t0 must be >= 0")
    if not 0 < gap <= 1:
        raise ValueError("gap must be in (0, 1]")
    if chi2_contrast < 1:
        raise ValueError("chi2 contrast must be >= 1")
    expo = float(t0) if reversible else (t0 - 1.0 / gap) / 2.0
    base = 1.0 - gap
    if base == 0.0:
        decay = 1.0 if expo == 0.0 else (0.0 if expo > 0 else math.inf)
    else:
        decay = base**expo
    return min(1.0, 0.5 * decay * math.sqrt(chi2_contrast - 1.0))


def _chebyshev_raw(inputs: BoundInputs, t: float) -> float:
    r = inputs.effective_samples
    factor = 4.0 if inputs.reversible else 16.0
    var_term = inputs.sigma2 + factor * inputs.v_f / (r * inputs.gap**2)
    return var_term / (r * t * t) + inputs.effective_burn_in_error


def chebyshev_tail(inputs: BoundInputs, t: float) -> float:
    """Two-sided Chebyshev tail bound at deviation t (capped at 1)."""
    if t <= 0:
        raise ValueError("t must be > 0")
    return min(1.0, _chebyshev_raw(inputs, t))


def _bernstein_exp_term(inputs: BoundInputs, t: float) -> float:
    r = inputs.effective_samples
    if inputs.reversible:
        denom = 2.0 * (inputs.sigma2 + 0.8 * inputs.v_f) + 10.0 * t * inputs.c / inputs.gap
        if denom == 0.0:
            return 1.0 if t == 0.0 else 0.0
        return math.exp(-r * t * t / denom)
    horizon = r - 1.0 / inputs.gap
    if horizon <= 0:
        raise ValueError(
            "non-reversible Bernstein bound is vacuous: m(N - t0) <= 1/gap"
        )
    denom = 8.0 * inputs.v_f + 20.0 * inputs.c * t
    if denom == 0.0:
        return 1.0 if t == 0.0 else 0.0
    return math.exp(-horizon * t * t * inputs.gap / denom)


def _bernstein_raw(inputs: BoundInputs, t: float, one_sided: bool = False) -> float:
    lead = 1.0 if one_sided else 2.0
    return lead * _bernstein_exp_term(inputs, t) + inputs.effective_burn_in_error


def bernstein_tail(inputs: BoundInputs, t: float, one_sided: bool = False) -> float:
    """Bernstein tail bound at deviation t >= 0 (capped at 1).

    ``one_sided`` drops the leading factor 2 (valid for a single tail).
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    return min(1.0, _bernstein_raw(inputs, t, one_sided))


def invert_bernstein(inputs: BoundInputs, delta: float,
                     one_sided: bool = False) -> float:
    """Smallest deviation t with bernstein_tail(inputs, t) <= delta.

    Reversible case in closed form (the exponent is a quadratic root in t);
    non-reversible by bisection, tight to 1e-9 relative.  Note the
    two-sided bound starts at 2 + burn-in error, so its inverse tends to a
    positive limit as delta -> 1; only the one-sided inverse tends to 0.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must be in (0, 1)")
    slack = delta - inputs.effective_burn_in_error
    if slack <= 0:
        raise ValueError(
            "infeasible: burn-in error alone exceeds the requested delta"
        )
    lead = 1.0 if one_sided else 2.0
    if slack >= lead:
        return 0.0
    log_ratio = math.log(lead / slack)
    r = inputs.effective_samples
    if inputs.reversible:
        lin = log_ratio * 10.0 * inputs.c / inputs.gap
        const = log_ratio * 2.0 * (inputs.sigma2 + 0.8 * inputs.v_f)
        return (lin + math.sqrt(lin * lin + 4.0 * r * const)) / (2.0 * r)
    lo, hi = 0.0, 1.0
    while _bernstein_raw(inputs, hi, one_sided) > delta:
        hi *= 2.0
        if hi > 1e300:
            raise ValueError("failed to bracket the Bernstein inverse")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _bernstein_raw(inputs, mid, one_sided) > delta:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-12 * max(hi, 1e-300):
            break
    return hi


def variance_estimator_tail(big_t: float, n_hat: int, t0_hat: int, c: float,
                            tmix: float) -> tuple[float, float]:
    """Tail bound for underestimating the variance from a trace.

    Returns (probability, bias): with probability at most
    exp(-(N - t0) T^2 / (200 C^4 tmix)) plus the burn-in error (caller
    adds it), the true variance exceeds the estimate by more than
    8 tmix / (N - t0) + T.
    """
    if big_t < 0:
        raise ValueError("T must be >= 0")
    r = n_hat - t0_hat
    if r <= 0:
        raise ValueError("need n_hat > t0_hat")
    prob = math.exp(-r * big_t * big_t / (200.0 * c**4 * tmix))
    bias = 8.0 * tmix / r
    return min(1.0, prob), bias


def asym_variance_bias_bounds(
    k: int,
    n_hat: int,
    t0_hat: int,
    v_f: float,
    gap: float,
    abs_gap: float | None = None,
    reversible: bool = True,
) -> tuple[float, float]:
    """Window-k bias interval for the asymptotic-variance estimator.

    Returns (lower, upper) such that lower <= sigma2 - E[estimate] <= upper.
    Reversible chains require an even k (and use both the spectral gap and
    the absolute spectral gap); non-reversible chains use the pseudo gap
    and a symmetric interval.
    """
    r = n_hat - t0_hat
    if r - 3 * k - 1 <= 0:
        raise ValueError("need N - t0 - 3k - 1 > 0")
    if not 0 < gap <= 1:
        raise ValueError("gap must be in (0, 1]")
    if v_f < 0:
        raise ValueError("v_f must be >= 0")
    fin = (2.0 * k + 1.0) / (r - k) ** 2
    if reversible:
        if k % 2 != 0:
            raise ValueError("reversible bias bounds require an even k")
        if abs_gap is None:
            abs_gap = gap
        if not 0 < abs_gap <= 1:
            raise ValueError("abs_gap must be in (0, 1]")
        stretch = (r - k) / (r - 3.0 * k - 1.0)
        geo_low = min(v_f, 2.0 * v_f / gap * (1.0 - abs_gap) ** (k + 1))
        geo_high = 2.0 * v_f / gap * (1.0 - min(gap, 1.0)) ** (k + 1)
        l_k = (geo_low + 4.0 * v_f / gap**2 * fin) * stretch
        u_k = (geo_high + 4.0 * v_f / gap**2 * fin) * stretch
        return -l_k, u_k
    w_k = (
        4.0 * v_f / gap * (1.0 - gap) ** ((k + 1.0 - 1.0 / gap) / 2.0)
        + 16.0 * v_f / gap**2 * fin
    )
    return -w_k, w_k


def asym_variance_concentration(t: float, k: int, n_hat: int, t0_hat: int,
                                c: float, tmix: float) -> float:
    """Two-sided concentration of the asymptotic-variance estimator.

    2 exp(-t^2 (N - t0 - 3k - 1) / (512 (2k+1)^2 C^4 tmix)), capped at 1.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    r = n_hat - t0_hat
    if r - 3 * k - 1 <= 0:
        raise ValueError("need N - t0 - 3k - 1 > 0")
    expo = -t * t * (r - 3.0 * k - 1.0) / (512.0 * (2.0 * k + 1.0) ** 2 * c**4 * tmix)
    return min(1.0, 2.0 * math.exp(expo))


# ---------------------------------------------------------------------------
# Analytic gap/mixing-time values for the lattice dynamics.
# ---------------------------------------------------------------------------


def curie_weiss_glauber_gap(n_s: int, beta: float) -> tuple[float, float]:
    """High-temperature Curie-Weiss Glauber (gap, mixing time).

    gap = (1 - beta)/n_s, tmix = n_s log((1-beta)^2 n_s) / (2 (1-beta)).
    Valid for beta < 1 with (1-beta)^2 n_s > 1.
    """
    if beta >= 1:
        raise ValueError("formula holds in the high-temperature regime beta < 1")
    arg = (1.0 - beta) ** 2 * n_s
    if arg <= 1:
        raise ValueError("need (1-beta)^2 n_s > 1 for a positive mixing time")
    gap = (1.0 - beta) / n_s
    tmix = 0.5 * n_s * math.log(arg) / (1.0 - beta)
    return gap, tmix


@dataclass(frozen=True)
class Ising1dGaps:
    gap_random_scan: float
    tmix_random_scan: float
    pseudo_gap_systematic: float
    tmix_systematic: float


def ising1d_gaps(n_s: int, beta: float) -> Ising1dGaps:
    """Analytic 1D Ising values for random-scan and systematic-scan Glauber."""
    if n_s < 2:
        raise ValueError("need n_s >= 2")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    e4 = math.exp(-4.0 * beta)
    log4n = math.log(4.0 * n_s)
    return Ising1dGaps(
        gap_random_scan=2.0 / n_s * e4 / (1.0 + e4),
        tmix_random_scan=n_s / 2.0 * (1.0 + math.exp(4.0 * beta)) * log4n,
        pseudo_gap_systematic=8.0 * e4 * (1.0 + e4) / (1.0 + 3.0 * e4) ** 2,
        tmix_systematic=0.25 * (3.0 + math.exp(4.0 * beta)) * log4n,
    )


def burn_in_from_tmix(tmix: float, multiple: float = 30.0) -> int:
    """Burn-in choice floor(30 tmix) used by all the experiments."""
    if tmix <= 0:
        raise ValueError("tmix must be > 0")
    return math.floor(multiple * tmix)


def mixing_time_interval(gap: float, pi_min: float | None,
                         reversible: bool) -> tuple[float, float]:
    """Mixing-time interval implied by the gap.

    Lower bound: invert gap >= 1/(1 + tmix/log 2) (reversible, absolute
    gap) or pseudo_gap >= 1/(2 tmix).  Upper bound (finite state spaces,
    needs pi_min): (2 log 2 + log(1/pi_min)) / (2 gap), or
    (1 + 2 log 2 + log(1/pi_min)) / pseudo_gap.  Without pi_min the upper
    bound is +inf.
    """
    if not 0 < gap <= 1:
        raise ValueError("gap must be in (0, 1]")
    log2 = math.log(2.0)
    if reversible:
        lower = log2 * (1.0 / gap - 1.0)
    else:
        lower = 1.0 / (2.0 * gap)
    if pi_min is None:
        return lower, math.inf
    if not 0 < pi_min <= 1:
        raise ValueError("pi_min must be in (0, 1]")
    if reversible:
        upper = (2.0 * log2 + math.log(1.0 / pi_min)) / (2.0 * gap)
    else:
        upper = (1.0 + 2.0 * log2 + math.log(1.0 / pi_min)) / gap
    return lower, upper


def normal_log_tail(sigma2: float, n: int, t0: int, t: float) -> float:
    """log P(N(0, sigma2/(N-t0)) > t): the CLT comparison curve.

    Stable for arbitrarily deep tails (log-space complementary normal CDF).
    """
    if sigma2 <= 0:
        raise ValueError("sigma2 must be > 0")
    if t < 0:
        raise ValueError("t must be >= 0")
    if n <= t0:
        raise ValueError("need n > t0")
    z = t * math.sqrt(n - t0) / math.sqrt(sigma2)
    return float(log_ndtr(-z))


def subsample_spacing(gap: float, reversible: bool = True,
                      m: int | None = None) -> tuple[int, float]:
    """Subsampling spacing and the resulting gap.

    Reversible: m = smallest odd integer >= 1/gap and
    gap' = 1 - (1-gap)^m >= (e-1)/e.  Non-reversible chains have no
    data-driven optimal spacing; the caller must supply the k attaining
    the pseudo-gap maximum, and the subsampled pseudo gap is m * gap.
    """
    if not 0 < gap <= 1:
        raise ValueError("gap must be in (0, 1]")
    if reversible:
        if m is None:
            m = math.ceil(1.0 / gap)
            if m % 2 == 0:
                m += 1
        elif m % 2 == 0:
            raise ValueError("reversible subsampling needs an odd spacing")
        return m, 1.0 - (1.0 - gap) ** m
    if m is None:
        raise ValueError(
            "non-reversible subsampling needs the caller-supplied optimal spacing"
        )
    return m, min(1.0, m * gap)


# ---------------------------------------------------------------------------
# Tail curves.
# ---------------------------------------------------------------------------

_FORMULAS = ("chebyshev", "bernstein", "bernstein_onesided", "normal")


@dataclass(frozen=True)
class TailCurve:
    """A bound evaluated on a nonnegative deviation grid, in log space."""

    grid: np.ndarray
    log_probabilities: np.ndarray
    uncapped: np.ndarray
    formula_id: str

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        logp = np.asarray(self.log_probabilities, dtype=np.float64)
        raw = np.asarray(self.uncapped, dtype=np.float64)
        if not (len(grid) == len(logp) == len(raw)):
            raise ValueError("grid and value arrays must have equal length")
        if np.any(grid < 0):
            raise ValueError("grid deviations must be >= 0")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "log_probabilities", logp)
        object.__setattr__(self, "uncapped", raw)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", "log_bound", "bound_uncapped", "formula_id"])
        for t, lp, raw in zip(self.grid, self.log_probabilities, self.uncapped):
            writer.writerow([f"{t:.17g}", f"{lp:.17g}", f"{raw:.17g}", self.formula_id])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "TailCurve":
        rows = list(csv.reader(io.StringIO(text)))
        if rows and rows[0][:1] == ["t"]:
            rows = rows[1:]
        grid = np.array([float(r[0]) for r in rows])
        logp = np.array([float(r[1]) for r in rows])
        raw = np.array([float(r[2]) for r in rows])
        formula = rows[0][3] if rows else ""
        return cls(grid, logp, raw, formula)


def _log_cap(raw: float) -> float:
    if raw >= 1.0:
        return 0.0
    if raw <= 0.0:
        return -math.inf
    return math.log(raw)


def tail_curve(inputs: BoundInputs, grid, formula: str) -> TailCurve:
    """Evaluate one bound formula on a nonnegative deviation grid."""
    if formula not in _FORMULAS:
        raise ValueError(f"formula must be one of {_FORMULAS}")
    grid = np.asarray(grid, dtype=np.float64)
    raw = np.empty(len(grid))
    logp = np.empty(len(grid))
    for idx, t in enumerate(grid):
        if formula == "chebyshev":
            r = _chebyshev_raw(inputs, t) if t > 0 else math.inf
            logp[idx] = _log_cap(r)
        elif formula == "bernstein":
            r = _bernstein_raw(inputs, t)
            logp[idx] = _log_cap(r)
        elif formula == "bernstein_onesided":
            r = _bernstein_raw(inputs, t, one_sided=True)
            logp[idx] = _log_cap(r)
        else:
            logp[idx] = normal_log_tail(inputs.sigma2, inputs.n, inputs.t0, t)
            r = math.exp(logp[idx])
        raw[idx] = r
    return TailCurve(grid, logp, raw, formula)


def with_parallel_runs(inputs: BoundInputs, n_chains: int) -> BoundInputs:
    """The same inputs evaluated for the pooled average of n_chains runs."""
    return replace(inputs, n_chains=n_chains)
