"""Command-line interface.

Subcommands:
  estimate       trace file -> estimator report
  bound          bound parameters + grid -> tail-curve CSV
  tails          full experiment (config file) -> tails.csv/report.txt/manifest.txt
  dag-posterior  edge-posterior estimate with a Bernstein confidence interval

Exit codes: 0 success, 2 configuration error, 3 estimation failure
(nonpositive asymptotic variance), 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import bounds as bnd
from . import dagbma, harness
from .backend import set_num_threads
from .estimators import EstimationError, estimate_parameters
from .rng import TAG_ESTIMATION, TAG_EVALUATION, Xoshiro256pp, fold_in

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ESTIMATION = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcmcbounds",
        description="MCMC averages with non-asymptotic confidence bounds",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="fit parameters from a trace file")
    est.add_argument("trace", help="text file with one observable value per line")
    est.add_argument("--c", type=float, required=True, help="uniform bound C on |f - mean|")
    est.add_argument("--non-reversible", action="store_true")
    est.add_argument("--t0-hat", type=int, default=None)
    est.add_argument("--k", type=int, default=None)
    est.add_argument("--out", default=None, help="write the report here instead of stdout")

    bound = sub.add_parser("bound", help="evaluate a tail bound on a grid")
    bound.add_argument("--formula", required=True,
                       choices=["chebyshev", "bernstein", "bernstein_onesided", "normal"])
    bound.add_argument("--v-f", type=float, required=True)
    bound.add_argument("--sigma2", type=float, required=True)
    bound.add_argument("--gamma", type=float, required=True)
    bound.add_argument("--tmix", type=float, required=True)
    bound.add_argument("--c", type=float, required=True)
    bound.add_argument("--n", type=int, required=True)
    bound.add_argument("--t0", type=int, required=True)
    bound.add_argument("--burn-in-error", type=float, default=None,
                       help="defaults to 2^-floor(t0/tmix)")
    bound.add_argument("--non-reversible", action="store_true")
    bound.add_argument("--n-chains", type=int, default=1)
    bound.add_argument("--t-min", type=float, default=0.0)
    bound.add_argument("--t-max", type=float, required=True)
    bound.add_argument("--points", type=int, default=200)
    bound.add_argument("--out", default=None)

    tails = sub.add_parser("tails", help="run a full tail experiment from a config")
    tails.add_argument("--config", required=True)
    tails.add_argument("--seed", type=int, default=None, help="override base_seed")
    tails.add_argument("--out", default=None, help="output directory")
    tails.add_argument("--runs", type=int, default=None, help="override m_runs")
    tails.add_argument("--threads", type=int, default=None,
                       help="worker threads (wall time only; never affects output)")

    dagp = sub.add_parser("dag-posterior",
                          help="edge-posterior estimate with a Bernstein CI")
    dagp.add_argument("--data", required=True, help="CSV path or builtin:dag6")
    dagp.add_argument("--edge", required=True, help="i,j (0-based)")
    dagp.add_argument("--s", type=float, default=4.0, help="equivalent sample size")
    dagp.add_argument("--n", type=int, default=100_000, help="evaluation run length")
    dagp.add_argument("--n-hat", type=int, default=1_000_000, help="estimation run length")
    dagp.add_argument("--seed", type=int, default=1)
    dagp.add_argument("--delta", type=float, default=0.05,
                      help="CI tail mass (half-width from the Bernstein inverse)")
    dagp.add_argument("--out", default=None)
    return parser


def _write_or_print(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _cmd_estimate(args) -> int:
    values = np.loadtxt(args.trace, ndmin=1)
    reports = estimate_parameters(
        [values], not args.non_reversible, args.c, t0_hat=args.t0_hat, k=args.k
    )
    _write_or_print(reports[0].to_text(), args.out)
    return EXIT_OK


def _cmd_bound(args) -> int:
    burn = args.burn_in_error
    if burn is None:
        burn = bnd.burn_in_error_uniform(args.t0, args.tmix)
    inputs = bnd.BoundInputs(
        v_f=args.v_f,
        sigma2=args.sigma2,
        gap=args.gamma,
        tmix=args.tmix,
        c=args.c,
        n=args.n,
        t0=args.t0,
        burn_in_error=burn,
        reversible=not args.non_reversible,
        n_chains=args.n_chains,
    )
    grid = np.linspace(args.t_min, args.t_max, args.points)
    curve = bnd.tail_curve(inputs, grid, args.formula)
    _write_or_print(curve.to_csv(), args.out)
    return EXIT_OK


def _cmd_tails(args) -> int:
    if args.threads is not None:
        set_num_threads(args.threads)
    config = harness.load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if args.runs is not None:
        overrides["m_runs"] = args.runs
    if overrides:
        config = harness.override(config, **overrides)
    out_dir = args.out if args.out is not None else config.out_dir
    if out_dir is None:
        raise harness.ConfigError("no output directory (set out_dir or pass --out)")
    summary = harness.run_experiment(config)
    paths = harness.emit_outputs(summary, out_dir)
    sys.stdout.write(
        f"wrote {paths['tails.csv']}, {paths['report.txt']}, {paths['manifest.txt']}\n"
    )
    return EXIT_OK


def _cmd_dag_posterior(args) -> int:
    data = harness.resolve_dataset(args.data)
    try:
        i, j = (int(part) for part in args.edge.split(","))
    except ValueError as exc:
        raise harness.ConfigError("--edge expects i,j") from exc
    cfg = dagbma.BmaConfig(args.s)
    kernel = dagbma.mh_dag_kernel(data, cfg)
    observable = dagbma.edge_indicator(i, j)
    sampler = kernel.canonical_initial_sampler
    rng = Xoshiro256pp(fold_in(args.seed, TAG_ESTIMATION))
    x0 = sampler(rng)
    from .chain import simulate_trace

    trace = simulate_trace(kernel, x0, observable, args.n_hat, rng)
    report = estimate_parameters([trace], True, 1.0)[0]
    t0 = bnd.burn_in_from_tmix(report.tmix_hat)
    if t0 >= args.n:
        raise harness.ConfigError(
            f"burn-in t0={t0} is not below the evaluation run length n={args.n}"
        )
    eval_rng = Xoshiro256pp(fold_in(args.seed, TAG_EVALUATION))
    x0 = sampler(eval_rng)
    sim = kernel.simulator
    out = sim.run_average(x0, args.n, t0, eval_rng, observable)
    if out is None:
        values = simulate_trace(kernel, x0, observable, args.n, eval_rng)
        posterior = float(values[t0:].mean())
    else:
        posterior = float(out[0])
    inputs = bnd.BoundInputs(
        v_f=report.v_hat,
        sigma2=report.sigma2_hat,
        gap=report.gamma_hat,
        tmix=report.tmix_hat,
        c=1.0,
        n=args.n,
        t0=t0,
        burn_in_error=bnd.burn_in_error_uniform(t0, report.tmix_hat),
        reversible=True,
    )
    half_width = bnd.invert_bernstein(inputs, args.delta)
    lo = max(0.0, posterior - half_width)
    hi = min(1.0, posterior + half_width)
    text = (
        f"edge = {i},{j}\n"
        f"posterior_estimate = {posterior!r}\n"
        f"ci_delta = {args.delta}\n"
        f"ci_half_width = {half_width!r}\n"
        f"ci_lower = {lo!r}\n"
        f"ci_upper = {hi!r}\n"
        f"t0 = {t0}\n"
        f"n = {args.n}\n" + report.to_text()
    )
    _write_or_print(text, args.out)
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "estimate": _cmd_estimate,
        "bound": _cmd_bound,
        "tails": _cmd_tails,
        "dag-posterior": _cmd_dag_posterior,
    }
    try:
        return handlers[args.command](args)
    except EstimationError as exc:
        print(f"estimation failure: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION
    except (harness.ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
