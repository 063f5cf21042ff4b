"""Command-line interface.

Exit codes: 0 on success, 2 on configuration errors (bad flags, malformed
model specs), 3 on data errors (malformed tree files).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys

import numpy as np

from .asymmetry import TestGrid, asymmetry_test
from .errors import ConfigError, DataError
from .estimators import BierensConfig, EstimatorConfig, GridSpec, evaluate_curve
from .kernels import BandwidthRule, get_kernel, silverman_constant
from .models import builtin_models, model_from_json, simulate_nbar
from .studies import (
    StudyConfig,
    ingest_pairs,
    run_bands_study,
    run_error_study,
    run_power_study,
    run_rejection_study,
)
from .trees import read_tree_csv


def _parse_grid(text: str) -> GridSpec:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"grid must look like lo:hi:step or lo:hi:auto, got {text!r}")
    lo, hi = float(parts[0]), float(parts[1])
    step = None if parts[2] == "auto" else float(parts[2])
    return GridSpec(lo, hi, step)


def _parse_points(text: str) -> TestGrid:
    if "," in text:
        return TestGrid.from_points([float(p) for p in text.split(",")])
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(
            f"points must look like lo:hi:step or a comma list, got {text!r}")
    return TestGrid.from_step(float(parts[0]), float(parts[1]), float(parts[2]))


def _parse_generations(text: str) -> tuple[int, ...]:
    if ":" in text:
        lo, hi = text.split(":")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(tok) for tok in text.split(","))


def _parse_taus(text: str) -> tuple[float, ...]:
    if ":" in text:
        lo, hi, count = text.split(":")
        return tuple(np.linspace(float(lo), float(hi), int(count)))
    return tuple(float(tok) for tok in text.split(","))


def _load_model(text: str):
    if text.endswith(".json") or os.path.sep in text:
        try:
            with open(text, "r", encoding="utf-8") as fh:
                return model_from_json(json.load(fh))
        except OSError as exc:
            raise ConfigError(f"cannot read model file {text!r}: {exc}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"model file {text!r} is not valid JSON: {exc}") from None
    return builtin_models(text)


def _model_config_value(text: str):
    """The value stored in study configs: builtin name or the parsed JSON."""
    if text.endswith(".json") or os.path.sep in text:
        with open(text, "r", encoding="utf-8") as fh:
            return json.load(fh)
    return text


def _print_or_write_json(obj: dict, out: str | None) -> None:
    payload = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(payload)
    else:
        sys.stdout.write(payload)


def _sibling(path: str, ext: str) -> str:
    stem, _ = os.path.splitext(path)
    return stem + ext


def _emit_study(report, args, plotter) -> None:
    if args.out:
        report.write_json(args.out)
        report.write_csv(_sibling(args.out, ".csv"))
        if not args.no_plot:
            plotter(report.to_dict(), _sibling(args.out, ".png"))
    else:
        sys.stdout.write(report.to_json())


# -- subcommand handlers -------------------------------------------------------


def _cmd_simulate(args) -> int:
    spec = _load_model(args.model)
    tree = simulate_nbar(spec, args.depth, args.seed)
    if args.out:
        tree.to_csv(args.out)
    else:
        sys.stdout.write("node,value\n")
        for node, value in tree.items():
            sys.stdout.write(f"{node},{value!r}\n")
    return 0


def _estimator_config(args, tree, grid: GridSpec | None = None) -> EstimatorConfig:
    kernel = get_kernel(args.kernel)
    constant = 1.0
    if getattr(args, "silverman", False):
        constant = silverman_constant(tree.values_up_to(tree.depth - 1))
    bandwidth = BandwidthRule(exponent=args.alpha, constant=constant)
    return EstimatorConfig(kernel=kernel, bandwidth=bandwidth,
                           threshold=args.threshold,
                           grid=grid if grid is not None else args.grid)


def _cmd_estimate(args) -> int:
    tree = read_tree_csv(args.tree)
    config = _estimator_config(args, tree)
    constant = config.bandwidth.constant
    bierens = BierensConfig(beta=args.beta, delta=args.delta,
                            const_a=constant, const_b=constant)
    curve = evaluate_curve(tree, config, kind=args.kind, bierens=bierens,
                           alpha=args.alpha)
    rows = zip(curve.x, curve.nu, curve.f0, curve.f1, curve.flags)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "nu_hat", "f0_hat", "f1_hat", "flag"])
            for x, nu, f0, f1, flag in rows:
                writer.writerow([repr(float(x)), repr(float(nu)), repr(float(f0)),
                                 repr(float(f1)), int(flag)])
        if not args.no_plot:
            from .plots import plot_curve

            plot_curve(curve, _sibling(args.out, ".png"))
    else:
        sys.stdout.write("x,nu_hat,f0_hat,f1_hat,flag\n")
        for x, nu, f0, f1, flag in rows:
            sys.stdout.write(f"{float(x)!r},{float(nu)!r},{float(f0)!r},"
                             f"{float(f1)!r},{int(flag)}\n")
    return 0


def _cmd_test(args) -> int:
    tree = read_tree_csv(args.tree)
    config = _estimator_config(args, tree, grid=GridSpec())
    constant = config.bandwidth.constant
    bierens = BierensConfig(beta=args.beta, delta=args.delta,
                            const_a=constant, const_b=constant)
    grid = _parse_points(args.points)
    if args.estimate_cov:
        variance = "estimate"
    else:
        variance = (args.sigma0, args.sigma1, args.rho)
    result = asymmetry_test(tree, config, bierens, grid, level=args.level,
                            variance=variance)
    _print_or_write_json(result.to_dict(), args.out)
    return 0


def _cmd_check(args) -> int:
    from .diagnostics import run_ergodicity_report
    from .models import NoiseModel

    noise = NoiseModel(sigma0=args.sigma0, sigma1=args.sigma1, rho=args.rho,
                       tail_r=args.tail_r, tail_lambda=args.tail_lambda)
    report = run_ergodicity_report(args.gamma, args.ell, noise)
    _print_or_write_json(report.to_dict(), args.out)
    return 0


def _cmd_ingest(args) -> int:
    tree, report = ingest_pairs(args.infile)
    if args.out:
        tree.to_csv(args.out)
        report["normalized"] = args.out
    _print_or_write_json(report, None)
    return 0


def _study_config(args, **overrides) -> StudyConfig:
    fields = {
        "replicates": args.replicates,
        "seed": args.seed,
        "kernel": args.kernel,
        "level": getattr(args, "level", 0.05),
        "beta": getattr(args, "beta", 2),
        "delta": getattr(args, "delta", 0.5),
        "mesh": getattr(args, "mesh", 0.5),
        "variance": "estimate" if getattr(args, "estimate_cov", False) else "known",
    }
    fields.update(overrides)
    return StudyConfig(**fields)


def _cmd_mc_error(args) -> int:
    from .plots import plot_error_study

    config = _study_config(
        args, model=_model_config_value(args.model),
        generations=_parse_generations(args.gens),
        bandwidth_exponent=args.alpha,
    )
    report = run_error_study(config, threads=args.threads, kind=args.kind)
    _emit_study(report, args, lambda rep, path: plot_error_study(rep, path))
    return 0


def _cmd_mc_reject(args) -> int:
    from .plots import plot_rejection_study

    config = _study_config(args, generations=_parse_generations(args.gens))
    report = run_rejection_study(config, case=args.case, threads=args.threads)
    _emit_study(report, args, lambda rep, path: plot_rejection_study(rep, path))
    return 0


def _cmd_mc_power(args) -> int:
    from .plots import plot_power_study

    config = _study_config(args, generations=(args.n,), taus=_parse_taus(args.taus))
    report = run_power_study(config, threads=args.threads)
    _emit_study(report, args, lambda rep, path: plot_power_study(rep, path))
    return 0


def _cmd_bands(args) -> int:
    from .plots import plot_bands

    config = _study_config(
        args, model=_model_config_value(args.model), generations=(args.n,),
        bandwidth_exponent=args.alpha,
    )
    report = run_bands_study(config, threads=args.threads, kind=args.kind)
    _emit_study(report, args, lambda rep, path: plot_bands(rep, path))
    return 0


# -- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nbar",
        description="Bifurcating autoregressive trees: simulation, kernel "
                    "estimation, asymmetry testing and Monte Carlo studies.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=1)
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--out", default=None)

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="simulate a tree to CSV")
    p.add_argument("--model", required=True,
                   help="builtin name (paper-neq, paper-eq, paper-tau(t)) or JSON file")
    p.add_argument("--depth", type=int, required=True)
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("estimate", parents=[common],
                       help="estimate curves from a tree CSV")
    p.add_argument("--tree", required=True)
    p.add_argument("--kind", choices=["plain", "recursive", "bierens"],
                   default="plain")
    p.add_argument("--alpha", type=float, default=0.2,
                   help="bandwidth exponent (plain) / generation exponent (recursive)")
    p.add_argument("--beta", type=int, default=2)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--grid", type=_parse_grid, default=GridSpec(),
                   help="lo:hi:step with step 'auto' for the N^-1/2 mesh")
    p.add_argument("--kernel", default="gaussian")
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--silverman", action="store_true",
                   help="fix bandwidth constants by the rule of thumb")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(handler=_cmd_estimate)

    p = sub.add_parser("test", parents=[common], help="asymmetry test on a tree CSV")
    p.add_argument("--tree", required=True)
    p.add_argument("--points", required=True,
                   help="lo:hi:step or comma-separated points")
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--beta", type=int, default=2)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--kernel", default="gaussian")
    p.add_argument("--threshold", type=float, default=0.0)
    p.add_argument("--sigma0", type=float, default=1.0)
    p.add_argument("--sigma1", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--estimate-cov", action="store_true",
                   help="plug in residual-based covariance estimates")
    p.add_argument("--silverman", action="store_true")
    p.set_defaults(handler=_cmd_test)

    p = sub.add_parser("check", parents=[common],
                       help="numeric ergodicity sufficient-condition report")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--ell", type=float, required=True)
    p.add_argument("--sigma0", type=float, default=1.0)
    p.add_argument("--sigma1", type=float, default=1.0)
    p.add_argument("--rho", type=float, default=0.0)
    p.add_argument("--tail-r", type=float, default=None)
    p.add_argument("--tail-lambda", type=float, default=None)
    p.set_defaults(handler=_cmd_check)

    p = sub.add_parser("ingest", parents=[common],
                       help="read observed data (tree or pair CSV) and report")
    p.add_argument("--in", dest="infile", required=True)
    p.set_defaults(handler=_cmd_ingest)

    p = sub.add_parser("mc-error", parents=[common],
                       help="estimation error study over generations")
    p.add_argument("--model", default="paper-neq")
    p.add_argument("--gens", default="8:12", help="lo:hi range or comma list")
    p.add_argument("--replicates", "-M", type=int, default=100)
    p.add_argument("--kernel", default="gaussian")
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--kind", choices=["plain", "recursive", "bierens"],
                   default="plain")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(handler=_cmd_mc_error)

    p = sub.add_parser("mc-reject", parents=[common],
                       help="rejection-rate study for the asymmetry test")
    p.add_argument("--case", choices=["eq", "neq"], required=True)
    p.add_argument("--gens", default="10", help="lo:hi range or comma list")
    p.add_argument("--mesh", type=float, default=0.5)
    p.add_argument("--replicates", "-M", type=int, default=100)
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--beta", type=int, default=2)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--kernel", default="gaussian")
    p.add_argument("--estimate-cov", action="store_true")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(handler=_cmd_mc_reject)

    p = sub.add_parser("mc-power", parents=[common],
                       help="power study along the tau interpolation")
    p.add_argument("--taus", default="0.125:0.25:11",
                   help="comma list or lo:hi:count")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--mesh", type=float, default=0.5)
    p.add_argument("--replicates", "-M", type=int, default=100)
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--beta", type=int, default=2)
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--kernel", default="gaussian")
    p.add_argument("--estimate-cov", action="store_true")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(handler=_cmd_mc_power)

    p = sub.add_parser("bands", parents=[common],
                       help="Monte Carlo confidence bands for the curves")
    p.add_argument("--model", default="paper-neq")
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--replicates", "-M", type=int, default=100)
    p.add_argument("--level", type=float, default=0.05,
                   help="significance level; bands cover 1-level")
    p.add_argument("--kernel", default="gaussian")
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--kind", choices=["plain", "recursive", "bierens"],
                   default="plain")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(handler=_cmd_bands)

    # grid and point specs such as "-3:3:0.5" must parse as values, not flags
    matcher = re.compile(r"^-\d.*$")
    for sp in [parser, common, *sub.choices.values()]:
        sp._negative_number_matcher = matcher

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
