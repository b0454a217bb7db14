"""MCMC empirical averages with non-asymptotic confidence bounds.

Subpackage map:

  chain       generic kernels, seeded chain drivers, burn-in/subsampling
  spin        Curie-Weiss / Ising models and their Glauber/Metropolis kernels
  dagbma      Bayesian model averaging over DAG structures
  estimators  variance / asymptotic-variance / gap / mixing-time estimators
  bounds      Chebyshev & Bernstein tail bounds and the analytic gap formulas
  harness     experiment orchestration (tail curves, CSV/report outputs)
  cli         the ``mcmcbounds`` command-line tool
"""

from .backend import active_backend
from .bounds import (
    BoundInputs,
    TailCurve,
    bernstein_tail,
    burn_in_error_spectral,
    burn_in_error_uniform,
    burn_in_from_tmix,
    chebyshev_tail,
    curie_weiss_glauber_gap,
    invert_bernstein,
    ising1d_gaps,
    mixing_time_interval,
    normal_log_tail,
    subsample_spacing,
    tail_curve,
)
from .chain import (
    Kernel,
    Trace,
    apply_burn_in,
    final_state_samples,
    finite_matrix_kernel,
    parallel_averages,
    parallel_traces,
    run_chain,
    subsample,
    vector_observable,
)
from .estimators import (
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
from .harness import (
    ConfigError,
    ExperimentConfig,
    TailSummary,
    emit_outputs,
    empirical_log_tail,
    load_config,
    run_experiment,
)

__version__ = "0.1.0"
