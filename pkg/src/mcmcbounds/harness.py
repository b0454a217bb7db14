"""Experiment orchestration: parallel tail runs, overlays, file outputs.

An experiment follows the two-stage protocol used by all the figures:

  1. one long estimation run of length ``n_hat`` fits the variance,
     asymptotic variance and (unless analytic formulas apply) the gap and
     mixing time; it uses the stream fold_in(base_seed, TAG_ESTIMATION);
  2. ``m_runs`` independent chains of length ``n`` start from the model's
     initial distribution, discard t0 = floor(30 tmix) steps and average
     the observable; chain i uses fold_in(fold_in(base_seed,
     TAG_EVALUATION), i).

The per-run averages are mean-shifted and turned into an empirical
log-tail curve, overlaid with the Chebyshev, Bernstein (two- and
one-sided) and normal-quantile curves on a grid of 200 points spanning
+-6 sigma/sqrt(n - t0).

Everything is deterministic given the config and base seed: rerunning a
config produces byte-identical output files regardless of thread count.
"""

from __future__ import annotations

import hashlib
import math
import os
from dataclasses import dataclass, fields, replace
from typing import Any

import numpy as np

from . import bounds as bnd
from . import dagbma, spin
from .chain import Kernel, parallel_averages, simulate_trace
from .estimators import EstimatorReport, estimate_parameters
from .rng import TAG_ESTIMATION, TAG_EVALUATION, Xoshiro256pp, fold_in


class ConfigError(ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""


_SPIN_FAMILIES = (spin.CURIE_WEISS, spin.ISING_1D, spin.ISING_2D)
_KERNELS = ("glauber_random", "glauber_systematic", "metropolis")

# key -> (parser, default); None default means unset
_CONFIG_KEYS = {
    "model": (str, None),
    "n_s": (int, None),
    "beta": (float, None),
    "h": (float, 0.0),
    "kernel": (str, None),
    "dataset": (str, None),
    "equivalent_sample_size": (float, 4.0),
    "observable": (str, None),
    "gamma_observables": (str, None),
    "n": (int, None),
    "m_runs": (int, None),
    "base_seed": (int, None),
    "n_hat": (int, 1_000_000),
    "t0_hat": (int, None),
    "k": (int, None),
    "c": (float, None),
    "gap_source": (str, "estimated"),
    "sigma2": (float, None),
    "v_f": (float, None),
    "gamma_star": (float, None),
    "n_q": (float, None),
    "grid_points": (int, 200),
    "grid_span": (float, 6.0),
    "out_dir": (str, None),
}


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    observable: str
    n: int
    m_runs: int
    base_seed: int
    n_s: int | None = None
    beta: float | None = None
    h: float = 0.0
    kernel: str | None = None
    dataset: str | None = None
    equivalent_sample_size: float = 4.0
    gamma_observables: str | None = None
    n_hat: int = 1_000_000
    t0_hat: int | None = None
    k: int | None = None
    c: float | None = None
    gap_source: str = "estimated"
    sigma2: float | None = None
    v_f: float | None = None
    gamma_star: float | None = None
    n_q: float | None = None
    grid_points: int = 200
    grid_span: float = 6.0
    out_dir: str | None = None

    def __post_init__(self):
        if self.n < 1 or self.m_runs < 1 or self.n_hat < 1:
            raise ConfigError("n, m_runs and n_hat must be positive")
        if self.grid_points < 2 or self.grid_span <= 0:
            raise ConfigError("grid_points must be >= 2 and grid_span > 0")
        if self.gap_source not in ("analytic", "estimated"):
            raise ConfigError("gap_source must be analytic or estimated")
        if self.model in _SPIN_FAMILIES:
            if self.n_s is None or self.beta is None:
                raise ConfigError("spin models need n_s and beta")
            if self.kernel not in _KERNELS:
                raise ConfigError(f"kernel must be one of {_KERNELS}")
            if self.observable not in ("magnetization", "sign"):
                raise ConfigError("spin observable must be magnetization or sign")
        elif self.model == "dag":
            if self.dataset is None:
                raise ConfigError("dag model needs a dataset path (or builtin:dag6)")
            if not self.observable.startswith("edge:"):
                raise ConfigError("dag observable must be edge:i,j")
        else:
            raise ConfigError(f"unknown model {self.model!r}")
        if self.gap_source == "analytic" and not self._has_analytic_gap():
            raise ConfigError(
                "gap_source=analytic is only available for curie_weiss glauber_random "
                "and ising1d glauber_random/glauber_systematic"
            )

    def _has_analytic_gap(self) -> bool:
        return (self.model, self.kernel) in (
            (spin.CURIE_WEISS, "glauber_random"),
            (spin.ISING_1D, "glauber_random"),
            (spin.ISING_1D, "glauber_systematic"),
        )

    def canonical_text(self) -> str:
        lines = []
        for f in sorted(fields(self), key=lambda f: f.name):
            lines.append(f"{f.name} = {getattr(self, f.name)}")
        return "\n".join(lines) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse the flat ``key = value`` config format ('#' starts a comment)."""
    raw: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key or not val:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        parser, _ = _CONFIG_KEYS[key]
        try:
            raw[key] = parser(val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from exc
    for key, (_, default) in _CONFIG_KEYS.items():
        raw.setdefault(key, default)
    for required in ("model", "observable", "n", "m_runs", "base_seed"):
        if raw[required] is None:
            raise ConfigError(f"{source}: missing required key {required!r}")
    try:
        return ExperimentConfig(**raw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config_text(fh.read(), source=str(path))


def _parse_edge(text: str) -> tuple[int, int]:
    body = text[len("edge:"):]
    try:
        i, j = (int(part) for part in body.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad edge observable {text!r}, expected edge:i,j") from exc
    return i, j


@dataclass(frozen=True)
class TailSummary:
    """Per-run averages, the empirical log-tail, and all overlay curves."""

    per_run_averages: np.ndarray
    pooled_mean: float
    grid: np.ndarray
    log_tail: np.ndarray
    tail_counts: np.ndarray
    cheb_log: np.ndarray
    bern_log: np.ndarray
    bern_onesided_log: np.ndarray
    normal_log: np.ndarray
    inputs: bnd.BoundInputs
    report: EstimatorReport | None
    config: ExperimentConfig


def empirical_log_tail(estimates, grid) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean-shifted empirical log-tail on a grid.

    Returns (pooled_mean, log_tail, tail_counts); grid points whose tail
    count is zero get NaN (undefined), never -inf.  For t < 0 the curve is
    log F(t), for t >= 0 it is log(1 - F(t)), F being the empirical CDF of
    the mean-shifted per-run averages.
    """
    est = np.asarray(estimates, dtype=np.float64)
    if est.size == 0:
        raise ValueError("estimates must be nonempty")
    grid = np.asarray(grid, dtype=np.float64)
    pooled = math.fsum(est) / est.size
    shifted = np.sort(est - pooled)
    m = est.size
    log_tail = np.full(len(grid), np.nan)
    counts = np.zeros(len(grid), dtype=np.int64)
    for idx, t in enumerate(grid):
        n_le = int(np.searchsorted(shifted, t, side="right"))
        count = n_le if t < 0 else m - n_le
        counts[idx] = count
        if count > 0:
            log_tail[idx] = math.log(count / m)
    return pooled, log_tail, counts


def _build_kernel(config: ExperimentConfig):
    """(kernel, observable, initial_sampler, gamma_observables, c)."""
    if config.model in _SPIN_FAMILIES:
        model = spin.SpinModel(config.model, config.n_s, config.beta, config.h)
        maker = {
            "glauber_random": spin.glauber_random_scan_kernel,
            "glauber_systematic": spin.glauber_systematic_scan_kernel,
            "metropolis": spin.metropolis_spin_flip_kernel,
        }[config.kernel]
        kernel = maker(model)
        observable = (
            spin.magnetization if config.observable == "magnetization"
            else spin.sign_magnetization
        )
        c = config.c if config.c is not None else spin.observable_bound(observable, model)
        return kernel, observable, kernel.canonical_initial_sampler, [observable], c
    data = resolve_dataset(config.dataset)
    cfg = dagbma.BmaConfig(config.equivalent_sample_size)
    kernel = dagbma.mh_dag_kernel(data, cfg)
    target = dagbma.edge_indicator(*_parse_edge(config.observable))
    gamma_obs = [target]
    if config.gamma_observables:
        seen = {target.edge}
        for part in config.gamma_observables.replace(";", ",").split(","):
            part = part.strip()
            if not part:
                continue
            if not part.startswith("edge:"):
                raise ConfigError(f"gamma_observables entries must be edge:i,j, got {part!r}")
            obs = dagbma.edge_indicator(*_parse_edge(part))
            if obs.edge not in seen:
                seen.add(obs.edge)
                gamma_obs.append(obs)
    c = config.c if config.c is not None else 1.0
    return kernel, target, kernel.canonical_initial_sampler, gamma_obs, c


def resolve_dataset(spec: str) -> dagbma.BinaryDataset:
    """Dataset path, or the token ``builtin:dag6`` for the bundled network."""
    if spec == "builtin:dag6":
        return dagbma.generate_reference_dataset()
    if spec.startswith("builtin:"):
        raise ConfigError(f"unknown builtin dataset {spec!r}")
    try:
        return dagbma.load_dataset(spec)
    except FileNotFoundError as exc:
        raise ConfigError(f"dataset file not found: {spec}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _analytic_gap(config: ExperimentConfig) -> tuple[float, float]:
    if config.model == spin.CURIE_WEISS:
        try:
            return bnd.curie_weiss_glauber_gap(config.n_s, config.beta)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    gaps = bnd.ising1d_gaps(config.n_s, config.beta)
    if config.kernel == "glauber_random":
        return gaps.gap_random_scan, gaps.tmix_random_scan
    return gaps.pseudo_gap_systematic, gaps.tmix_systematic


def _estimation_stage(config, kernel, observable, sampler, gamma_obs, c):
    """Run the estimation chain (when needed); return (report, gap, tmix)."""
    analytic = config.gap_source == "analytic"
    if analytic and config.sigma2 is not None and config.v_f is not None:
        gap, tmix = _analytic_gap(config)
        return None, gap, tmix
    rng = Xoshiro256pp(fold_in(config.base_seed, TAG_ESTIMATION))
    x0 = sampler(rng)
    if config.model == "dag" and len(gamma_obs) > 1:
        edges = [obs.edge for obs in gamma_obs]
        values = kernel.simulator.run_trace_multi(x0, config.n_hat, rng, edges)
        traces = list(values)
    else:
        traces = [simulate_trace(kernel, x0, observable, config.n_hat, rng)]
    reports = estimate_parameters(
        traces, kernel.is_reversible, c, t0_hat=config.t0_hat, k=config.k
    )
    report = reports[0]  # the target observable is always first
    if analytic:
        gap, tmix = _analytic_gap(config)
    else:
        gap, tmix = report.gamma_hat, report.tmix_hat
    return report, gap, tmix


def run_experiment(config: ExperimentConfig) -> TailSummary:
    """Execute the full two-stage protocol; deterministic in base_seed."""
    kernel, observable, sampler, gamma_obs, c = _build_kernel(config)
    report, gap, tmix = _estimation_stage(
        config, kernel, observable, sampler, gamma_obs, c
    )
    sigma2 = config.sigma2 if config.sigma2 is not None else report.sigma2_hat
    v_f = config.v_f if config.v_f is not None else report.v_hat
    if sigma2 <= 0:
        raise ConfigError("sigma2 must be positive to build the tail grid")
    t0 = bnd.burn_in_from_tmix(tmix)
    if t0 >= config.n:
        raise ConfigError(
            f"burn-in t0={t0} (floor of 30*tmix) is not below the run length n={config.n}"
        )
    burn_err = bnd.burn_in_error_uniform(t0, tmix)
    if config.gamma_star is not None and config.n_q is not None:
        burn_err = min(
            burn_err,
            bnd.burn_in_error_spectral(
                t0, config.gamma_star, config.n_q, kernel.is_reversible
            ),
        )
    means, _ = parallel_averages(
        kernel,
        sampler,
        config.m_runs,
        config.n,
        t0,
        fold_in(config.base_seed, TAG_EVALUATION),
        observable,
    )
    scale = math.sqrt(sigma2) / math.sqrt(config.n - t0)
    grid = np.linspace(
        -config.grid_span * scale, config.grid_span * scale, config.grid_points
    )
    pooled, log_tail, counts = empirical_log_tail(means, grid)
    inputs = bnd.BoundInputs(
        v_f=v_f,
        sigma2=sigma2,
        gap=gap,
        tmix=tmix,
        c=c,
        n=config.n,
        t0=t0,
        burn_in_error=burn_err,
        reversible=kernel.is_reversible,
        n_chains=1,
    )
    abs_grid = np.abs(grid)
    curves = {
        name: bnd.tail_curve(inputs, abs_grid, name).log_probabilities
        for name in ("chebyshev", "bernstein", "bernstein_onesided", "normal")
    }
    return TailSummary(
        per_run_averages=means,
        pooled_mean=pooled,
        grid=grid,
        log_tail=log_tail,
        tail_counts=counts,
        cheb_log=curves["chebyshev"],
        bern_log=curves["bernstein"],
        bern_onesided_log=curves["bernstein_onesided"],
        normal_log=curves["normal"],
        inputs=inputs,
        report=report,
        config=config,
    )


# ---------------------------------------------------------------------------
# Output files.
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def render_tails_csv(summary: TailSummary) -> str:
    lines = ["t,L_hat,cheb_log,bern_log,normal_log,bern_onesided_log"]
    for i, t in enumerate(summary.grid):
        cells = [
            _fmt(t),
            "" if math.isnan(summary.log_tail[i]) else _fmt(summary.log_tail[i]),
            _fmt(summary.cheb_log[i]),
            _fmt(summary.bern_log[i]),
            _fmt(summary.normal_log[i]),
            _fmt(summary.bern_onesided_log[i]),
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def render_report(summary: TailSummary) -> str:
    cfg = summary.config
    inp = summary.inputs
    lines = [
        "# resolved experiment parameters",
        f"model = {cfg.model}",
        f"kernel = {cfg.kernel}" if cfg.kernel else "kernel = mh_dag",
        f"observable = {cfg.observable}",
        f"gap_source = {cfg.gap_source}",
        f"gamma = {inp.gap:.2e}",
        f"t_mix = {math.floor(inp.tmix)}",
        f"t_mix_exact = {inp.tmix!r}",
        f"sigma2 = {inp.sigma2:.6g}",
        f"v_f = {inp.v_f:.6g}",
        f"t0 = {inp.t0}",
        f"n = {inp.n}",
        f"m_runs = {cfg.m_runs}",
        f"c = {inp.c:g}",
        f"burn_in_error = {inp.burn_in_error:.6g}",
        f"pooled_mean = {summary.pooled_mean!r}",
    ]
    if summary.report is not None:
        lines.append("# estimator report")
        lines.append(summary.report.to_text().rstrip("\n"))
    return "\n".join(lines) + "\n"


def render_manifest(summary: TailSummary) -> str:
    cfg = summary.config
    lines = [
        f"config_hash = {cfg.config_hash()}",
        f"base_seed = {cfg.base_seed}",
        f"estimation_seed = {fold_in(cfg.base_seed, TAG_ESTIMATION)}",
        f"evaluation_base_seed = {fold_in(cfg.base_seed, TAG_EVALUATION)}",
        f"m_runs = {cfg.m_runs}",
        "rng = xoshiro256++ seeded via splitmix64; evaluation chain i uses "
        "fold_in(evaluation_base_seed, i)",
    ]
    return "\n".join(lines) + "\n"


def emit_outputs(summary: TailSummary, out_dir) -> dict[str, str]:
    """Write tails.csv, report.txt and manifest.txt; no partial files.

    All contents are rendered in memory before anything is opened, so an
    unwritable path fails before any partial tails.csv exists.
    """
    contents = {
        "tails.csv": render_tails_csv(summary),
        "report.txt": render_report(summary),
        "manifest.txt": render_manifest(summary),
    }
    os.makedirs(out_dir, exist_ok=True)
    paths = {}
    for name, text in contents.items():
        path = os.path.join(out_dir, name)
        with open(path, "w") as fh:
            fh.write(text)
        paths[name] = path
    return paths


def override(config: ExperimentConfig, **kwargs) -> ExperimentConfig:
    """A copy of ``config`` with some fields replaced (CLI flag overrides)."""
    return replace(config, **kwargs)
