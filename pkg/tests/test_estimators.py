import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mcmcbounds.chain import finite_matrix_kernel, run_chain, vector_observable
from mcmcbounds.estimators import (
    EstimationError,
    EstimatorReport,
    asymptotic_variance,
    autocovariance,
    default_window_policy,
    empirical_variance,
    estimate_parameters,
    mixing_time_estimate,
    spectral_gap_estimate,
)

TWO_STATE = np.array([[0.75, 0.25], [0.25, 0.75]])
PM_ONE = vector_observable([-1.0, 1.0])


def test_variance_constant_trace():
    assert empirical_variance(np.full(100, 2.5), 10) == 0.0


def test_variance_hand_example():
    assert empirical_variance(np.array([1.0, 2.0, 3.0, 4.0]), 0) == pytest.approx(1.25)


def test_variance_too_short():
    with pytest.raises(ValueError):
        empirical_variance(np.array([1.0, 2.0]), 1)


def test_autocov_constant_trace():
    v = np.full(200, 7.0)
    for i in range(5):
        assert autocovariance(v, 10, 5, i) == pytest.approx(0.0, abs=1e-12)


def test_autocov_lag0_matches_variance():
    v = np.array([1.0, 2.0, 3.0, 4.0])
    assert autocovariance(v, 0, 0, 0) == pytest.approx(1.25)
    assert autocovariance(v, 0, 0, 0) == pytest.approx(empirical_variance(v, 0))


def test_autocov_lag_bounds():
    with pytest.raises(ValueError):
        autocovariance(np.zeros(100), 0, 5, 6)


def test_autocov_iid_normal_small():
    rng = np.random.default_rng(123)
    n = 100_000
    v = rng.standard_normal(n)
    for i in range(1, 11):
        assert abs(autocovariance(v, 0, 10, i)) <= 4 / math.sqrt(n)


def test_asymptotic_variance_constant():
    assert asymptotic_variance(np.full(300, 3.0), 10, 20) == pytest.approx(0.0)


def test_asymptotic_variance_k_bounds():
    with pytest.raises(ValueError):
        asymptotic_variance(np.zeros(100), 10, 0)
    with pytest.raises(ValueError):
        asymptotic_variance(np.zeros(100), 10, 90)


def test_asymptotic_variance_negative_warns():
    v = np.array([(-1.0) ** i for i in range(2000)])
    with pytest.warns(RuntimeWarning):
        s2 = asymptotic_variance(v, 0, 11)
    assert s2 < 0
    with pytest.raises(EstimationError):
        spectral_gap_estimate([(1.0, s2)], True)


def test_default_policy_examples():
    assert default_window_policy(10**6) == (10**5, 1000)
    assert default_window_policy(1000) == (100, 100)
    assert default_window_policy(120) == (12, 40)
    with pytest.raises(ValueError):
        default_window_policy(30)  # k = 30 > 30 - 3 - 1


def test_gap_estimate_rules():
    # eigenfunction identity values: V=1, sigma2=3 -> 2/3
    assert spectral_gap_estimate([(1.0, 3.0)], True) == pytest.approx(2 / 3)
    # min rule over observables
    assert spectral_gap_estimate([(1.0, 20.0), (1.0, 40.0)], True) == pytest.approx(0.05)
    # non-reversible factor 4
    assert spectral_gap_estimate([(1.0, 8.0)], False) == pytest.approx(0.5)
    # clamped into (0, 1]
    assert spectral_gap_estimate([(10.0, 1.0)], True) == 1.0
    with pytest.raises(ValueError):
        spectral_gap_estimate([], True)


def test_mixing_time_estimate():
    assert mixing_time_estimate(1.0, True) == 1.0
    t = mixing_time_estimate(2.72e-3, True)
    assert math.floor(t) == 367
    t = mixing_time_estimate(2.11e-1, True)
    assert t == pytest.approx(4.739, rel=1e-3)
    assert math.floor(t) == 4
    assert mixing_time_estimate(0.5, False) == 4.0
    with pytest.raises(ValueError):
        mixing_time_estimate(0.0, True)


@settings(max_examples=30, deadline=None)
@given(
    shift=st.floats(min_value=-1e4, max_value=1e4, allow_nan=False),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_shift_invariance(shift, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(0, 2.0, 3000)
    t0, k = 300, 30
    base_v = empirical_variance(v, t0)
    base_s = asymptotic_variance(v, t0, k)
    shifted_v = empirical_variance(v + shift, t0)
    shifted_s = asymptotic_variance(v + shift, t0, k)
    assert shifted_v == pytest.approx(base_v, rel=1e-10, abs=1e-10)
    assert shifted_s == pytest.approx(base_s, rel=1e-10, abs=1e-10)
    for i in (0, 1, 5):
        a = autocovariance(v, t0, k, i)
        b = autocovariance(v + shift, t0, k, i)
        assert b == pytest.approx(a, rel=1e-10, abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(
    scale=st.floats(min_value=1e-3, max_value=1e3, allow_nan=False),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_scale_covariance_and_gap_invariance(scale, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(1.0, 1.0, 2000)
    t0, k = 200, 20
    v_hat = empirical_variance(v, t0)
    s2 = asymptotic_variance(v, t0, k)
    v_hat_s = empirical_variance(v * scale, t0)
    s2_s = asymptotic_variance(v * scale, t0, k)
    assert v_hat_s == pytest.approx(scale**2 * v_hat, rel=1e-9)
    assert s2_s == pytest.approx(scale**2 * s2, rel=1e-9)
    if s2 > 0:
        g = spectral_gap_estimate([(v_hat, s2)], True)
        g_s = spectral_gap_estimate([(v_hat_s, s2_s)], True)
        assert g_s == pytest.approx(g, rel=1e-9)


def test_two_state_consistency_improves_with_n():
    # |sigma2_hat - 3| shrinks (in median over seeds) from N=10^4 to N=10^6
    kernel = finite_matrix_kernel(TWO_STATE)

    def err_at(n, seeds):
        errs = []
        for s in seeds:
            tr = run_chain(kernel, 0, PM_ONE, n, seed=s)
            t0, k = default_window_policy(n)
            errs.append(abs(asymptotic_variance(tr.values, t0, k) - 3.0))
        return float(np.median(errs))

    seeds = range(20)
    assert err_at(10**6, range(5)) < err_at(10**4, seeds)


def test_report_roundtrip():
    rep = EstimatorReport(
        v_hat=17.19,
        sigma2_hat=615.75,
        k=1000,
        n_hat=10**6,
        t0_hat=10**5,
        gamma_hat=0.05584,
        tmix_hat=17.908,
        reversible=True,
        c_bound=10.0,
    )
    again = EstimatorReport.from_text(rep.to_text())
    assert again == rep
    assert rep.tmix_display == 17


def test_estimate_parameters_multi_trace_shared_gap():
    rng = np.random.default_rng(9)
    a = rng.normal(0, 1, 5000)
    b = rng.normal(0, 2, 5000)
    reports = estimate_parameters([a, b], True, 1.0)
    assert len(reports) == 2
    assert reports[0].gamma_hat == reports[1].gamma_hat
    expected = min(
        min(1.0, 2 * r.v_hat / r.sigma2_hat) for r in reports
    )
    assert reports[0].gamma_hat == pytest.approx(expected)
    with pytest.raises(ValueError):
        estimate_parameters([a, b[:100]], True, 1.0)
