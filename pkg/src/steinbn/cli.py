"""Command-line entry point for the shrinkage laboratory.

Subcommands:
  risk gaussian|gamma|inequality|lemma   Monte Carlo dominance and identity checks
  noise sample                           draw perturbations to CSV
  train                                  run a training sweep from a JSON config
  eval                                   re-evaluate a saved checkpoint under noise
  report                                 merge result CSVs into a summary table

Exit codes: 0 success, 1 invalid input, 2 dominance verdict Violated. All
artifacts are written atomically (temp file + rename) and echo the resolved
configuration plus the tool version.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .estimators import classical_c_bound
from .harness import (
    Checkpoint,
    ExperimentConfig,
    aggregate_results,
    evaluate_under_noise,
    make_dataset,
    rows_from_csv,
    rows_to_csv,
    run_sweep,
    train_model,
)
from .noise import NoiseSpec, sample_noise_flat, truncated_levy_gauss
from .rng import CounterRng
from .risk import (
    VERDICT_VIOLATED,
    GammaTrialSpec,
    mc_key_inequality,
    mc_risk_gamma,
    mc_risk_gaussian,
    mc_stein_gamma_lemma,
)
from .tensor import InvalidInputError


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on bad flags."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _theta(p: int, norm: float) -> np.ndarray:
    """Deterministic direction: theta = norm/sqrt(p) * (1,...,1)."""
    return np.full(p, norm / np.sqrt(p))


def _csv_with_config(body: str, config: dict) -> str:
    """Append the resolved config as trailing comment lines."""
    lines = ["# config: " + json.dumps(config, sort_keys=True)]
    return body + "\n".join(lines) + "\n"


def _build_parser() -> _Parser:
    parser = _Parser(prog="steinbn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"steinbn {__version__}")
    sub = parser.add_subparsers(dest="command")

    risk = sub.add_parser("risk", help="Monte Carlo risk and identity checks")
    rsub = risk.add_subparsers(dest="risk_command")

    g = rsub.add_parser("gaussian", help="James-Stein vs MLE mean risk")
    g.add_argument("--p", type=int, required=True)
    g.add_argument("--theta-norm", type=float, required=True)
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--eps", type=float, default=0.0, help="truncation bound of the mixture noise")
    g.add_argument("--trials", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--k", type=float, default=3.0)
    g.add_argument("--out", required=True)

    gm = rsub.add_parser("gamma", help="geometric-mean shrinkage vs naive variance risk")
    gm.add_argument("--p", type=int, required=True)
    gm.add_argument("--n", type=int, required=True)
    gm.add_argument("--mu", type=float, default=0.0)
    gm.add_argument("--sigmas-x", default="1", help="comma list of scales; a single value is broadcast")
    gm.add_argument("--c", type=float, default=None, help="shrinkage constant; default midpoint of the classical interval")
    gm.add_argument("--eps", type=float, default=0.0)
    gm.add_argument("--trials", type=int, required=True)
    gm.add_argument("--seed", type=int, required=True)
    gm.add_argument("--k", type=float, default=3.0)
    gm.add_argument("--out", required=True)

    iq = rsub.add_parser("inequality", help="key expectation inequality check")
    iq.add_argument("--p", type=int, required=True)
    iq.add_argument("--theta-norm", type=float, required=True)
    iq.add_argument("--eps", type=float, default=0.0)
    iq.add_argument("--trials", type=int, required=True)
    iq.add_argument("--seed", type=int, required=True)
    iq.add_argument("--k", type=float, default=3.0)
    iq.add_argument("--out", required=True)

    lm = rsub.add_parser("lemma", help="Gamma Stein identity on the catalog")
    lm.add_argument("--alpha", type=float, required=True)
    lm.add_argument("--beta", type=float, required=True)
    lm.add_argument("--h", default="square", help="catalog function name")
    lm.add_argument("--trials", type=int, required=True)
    lm.add_argument("--seed", type=int, required=True)
    lm.add_argument("--k", type=float, default=4.0)
    lm.add_argument("--out", required=True)

    noise = sub.add_parser("noise", help="perturbation sampling")
    nsub = noise.add_subparsers(dest="noise_command")
    ns = nsub.add_parser("sample", help="draw i.i.d. perturbations to CSV")
    ns.add_argument("--family", default="levy-gauss")
    ns.add_argument("--sigma", type=float, default=1.0)
    ns.add_argument("--eps", type=float, default=0.0)
    ns.add_argument("--n", type=int, required=True)
    ns.add_argument("--seed", type=int, required=True)
    ns.add_argument("--out", required=True)

    tr = sub.add_parser("train", help="training sweep from a JSON config")
    tr.add_argument("--config", required=True)
    tr.add_argument("--out", required=True, help="results CSV path")
    tr.add_argument("--checkpoint-dir", default=None)

    ev = sub.add_parser("eval", help="evaluate a checkpoint under a noise sweep")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--levels", default=None, help="comma list; default from checkpoint config")
    ev.add_argument("--family", default=None)
    ev.add_argument("--out", required=True)

    rp = sub.add_parser("report", help="merge result CSVs into a summary table")
    rp.add_argument("inputs", nargs="+")
    rp.add_argument("--out", required=True)
    rp.add_argument("--gnuplot", default=None, help="optional whitespace-separated data file")

    return parser


def _cmd_risk(args) -> int:
    if args.risk_command == "lemma":
        lhs, rhs, gap = mc_stein_gamma_lemma(
            args.alpha, args.beta, args.h, args.trials, args.seed, k=args.k
        )
        payload = {
            "lhs": lhs,
            "rhs": rhs,
            "gap_in_se": gap,
            "holds": abs(gap) < args.k,
            "config": {
                "alpha": args.alpha,
                "beta": args.beta,
                "h": args.h,
                "trials": args.trials,
                "seed": args.seed,
                "k": args.k,
                "version": __version__,
            },
        }
        _atomic_write(args.out, json.dumps(payload, indent=2, sort_keys=True))
        return 0

    noise = truncated_levy_gauss(args.eps)
    if args.risk_command == "inequality":
        est, se, holds = mc_key_inequality(
            args.p, _theta(args.p, args.theta_norm), noise, args.trials, args.seed, k=args.k
        )
        payload = {
            "estimate": est,
            "se": se,
            "holds": holds,
            "config": {
                "p": args.p,
                "theta_norm": args.theta_norm,
                "eps": args.eps,
                "trials": args.trials,
                "seed": args.seed,
                "k": args.k,
                "version": __version__,
            },
        }
        _atomic_write(args.out, json.dumps(payload, indent=2, sort_keys=True))
        return 0

    if args.risk_command == "gaussian":
        report = mc_risk_gaussian(
            args.p, _theta(args.p, args.theta_norm), args.sigma, noise,
            args.trials, args.seed, k=args.k,
        )
    else:  # gamma
        sigmas = np.array([float(s) for s in args.sigmas_x.split(",")])
        if sigmas.size == 1:
            sigmas = np.full(args.p, sigmas[0])
        alpha = (args.n - 1) / 2.0
        c = args.c if args.c is not None else classical_c_bound(alpha, args.p) / 2.0
        spec = GammaTrialSpec(p=args.p, n=args.n, mu=args.mu, sigmas_x=sigmas, noise=noise, c=c)
        report = mc_risk_gamma(spec, args.trials, args.seed, k=args.k)
    report.config["version"] = __version__
    _atomic_write(args.out, report.to_json())
    print(f"{report.verdict} (margin {report.margin_se:.2f} se)")
    return 2 if report.verdict == VERDICT_VIOLATED else 0


def _cmd_noise(args) -> int:
    spec = NoiseSpec(family=args.family, sigma=args.sigma, epsilon_bound=args.eps)
    draws = sample_noise_flat(spec, args.n, CounterRng(args.seed), 1)
    body = "index,value\n" + "".join(f"{i},{float(v)!r}\n" for i, v in enumerate(draws))
    config = {
        "family": args.family,
        "sigma": args.sigma,
        "eps": args.eps,
        "n": args.n,
        "seed": args.seed,
        "version": __version__,
    }
    _atomic_write(args.out, _csv_with_config(body, config))
    return 0


def _cmd_train(args) -> int:
    with open(args.config) as f:
        config = ExperimentConfig.from_json(f.read())
    if args.checkpoint_dir:
        os.makedirs(args.checkpoint_dir, exist_ok=True)
        rows = []
        for seed in config.seeds:
            dataset = make_dataset(config, seed)
            ckpt = train_model(config, dataset, seed)
            ckpt.save(os.path.join(args.checkpoint_dir, f"{config.bn_variant}_s{seed}.ckpt"))
            rows.extend(
                evaluate_under_noise(ckpt, dataset, config.noise_levels, config.noise_family, seed)
            )
    else:
        rows = run_sweep(config)
    echo = json.loads(config.to_json())
    echo["version"] = __version__
    _atomic_write(args.out, _csv_with_config(rows_to_csv(rows), echo))
    return 0


def _cmd_eval(args) -> int:
    ckpt = Checkpoint.load(args.checkpoint)
    config = ckpt.config
    levels = (
        [float(s) for s in args.levels.split(",")] if args.levels else config.noise_levels
    )
    family = args.family or config.noise_family
    dataset = make_dataset(config, ckpt.seed)
    rows = evaluate_under_noise(ckpt, dataset, levels, family, ckpt.seed)
    echo = json.loads(config.to_json())
    echo.update({"levels": levels, "family": family, "version": __version__})
    _atomic_write(args.out, _csv_with_config(rows_to_csv(rows), echo))
    return 0


def _cmd_report(args) -> int:
    rows = []
    for path in args.inputs:
        with open(path) as f:
            rows.extend(rows_from_csv(f.read()))
    if not rows:
        raise InvalidInputError("no result rows found in the given inputs")
    summary = aggregate_results(rows)
    config = {"inputs": list(args.inputs), "version": __version__}
    _atomic_write(args.out, _csv_with_config(summary, config))
    if args.gnuplot:
        data = summary.splitlines()
        body = "\n".join(line.replace(",", " ") for line in data if not line.startswith("#"))
        _atomic_write(args.gnuplot, body + "\n")
    return 0


def run_cli(argv: list[str]) -> int:
    parser = _build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "risk":
            if not getattr(args, "risk_command", None):
                parser.print_usage(sys.stderr)
                return 1
            return _cmd_risk(args)
        if args.command == "noise":
            if not getattr(args, "noise_command", None):
                parser.print_usage(sys.stderr)
                return 1
            return _cmd_noise(args)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "report":
            return _cmd_report(args)
    except (InvalidInputError, OSError, ValueError, ZeroDivisionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    parser.print_usage(sys.stderr)
    return 1


def main() -> None:
    raise SystemExit(run_cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
