"""Command-line entry point.

Subcommands reproduce the experiments, compare correction and retraining
times, run the derivative checks, and manage the operator cache. Exit
codes: 0 success, 1 tolerance or assertion failure, 2 input error.
"""

from __future__ import annotations

import argparse
import os
import sys

from ..errors import GpCorrectError, InputError
from .config import build_config, load_config
from .experiments import run_experiment, run_gradient_check, run_timing
from .report import (
    write_experiment_outputs,
    write_gradcheck_csv,
    write_timing_csv,
)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2


def _add_common(parser):
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--seed", type=int, help="base RNG seed")
    parser.add_argument("--trials", type=int, help="number of trials")
    parser.add_argument("--order", type=int, choices=(1, 2), help="Taylor order")
    parser.add_argument("--out", help="output directory (default: ./results/<command>)")
    parser.add_argument("--storage", choices=("dense", "lazy"), help="operator storage policy")
    parser.add_argument("--psd-project", action="store_true", default=None,
                        help="clip corrected-covariance eigenvalues at zero")
    parser.add_argument("--no-figures", action="store_true", help="skip figure rendering")


def _build(args, kind=None):
    file_options = load_config(args.config) if args.config else {}
    overrides = {
        "seed": args.seed,
        "trials": args.trials,
        "order": args.order,
        "storage": args.storage,
        "psd_project": args.psd_project,
    }
    if getattr(args, "no_figures", False):
        overrides["figures"] = False
    return build_config(kind=kind, file_options=file_options, overrides=overrides)


def _out_dir(args, default_name):
    return args.out or os.path.join("results", default_name)


def _cmd_experiment(args, kind):
    cfg = _build(args, kind)
    result = run_experiment(cfg)
    out_dir = _out_dir(args, kind.replace("_", ""))
    paths = write_experiment_outputs(out_dir, result, figures=cfg.figures)
    s = result.summary
    print(f"{kind} experiment: {s['trials']} trials, order {s['order']}, seed {s['seed']}")
    print(f"  mean error norm corrupted : {s['norm_corrupted']:.6g}")
    print(f"  mean error norm corrected : {s['norm_corrected']:.6g}")
    print(f"  mean improvement          : {s['improvement_pct']:.2f}%"
          + (f"  ({s['degenerate_trials']} degenerate)" if s["degenerate_trials"] else ""))
    print(f"  trials improved           : {s['improved_trials']}/{s['trials']}")
    print(f"  wrote {len(paths)} files under {out_dir}")
    return EXIT_OK


def _cmd_timing(args):
    cfg = _build(args, getattr(args, "kind", None))
    timing = run_timing(cfg)
    out_dir = _out_dir(args, "timing")
    os.makedirs(out_dir, exist_ok=True)
    write_timing_csv(out_dir, timing)
    print(f"timing ({cfg.kind}, T={cfg.t_points}, M={cfg.m_points}, n={cfg.dims}, "
          f"K={cfg.subset_k or cfg.t_points}, order {cfg.order}, {timing.trials} trials)")
    print(f"  full retrain median       : {timing.retrain_median * 1e3:.3f} ms")
    print(f"  online correction median  : {timing.online_median * 1e3:.3f} ms")
    print(f"  offline precompute        : {timing.offline_seconds * 1e3:.3f} ms (excluded)")
    print(f"  speedup                   : {timing.speedup:.1f}x")
    print(f"  wrote timing.csv under {out_dir}")
    return EXIT_OK


def _cmd_check_gradients(args):
    report = run_gradient_check(
        seed=args.seed if args.seed is not None else 0,
        instances=args.instances,
    )
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        write_gradcheck_csv(args.out, report)
    print(f"gradient check over {report.instances} instances (seed {report.seed})")
    width = max(len(r.kind) for r in report.rows)
    for r in report.rows:
        state = "pass" if r.passed else "FAIL"
        print(f"  {r.kind:<{width}}  worst {r.worst:8.3f} of tolerance "
              f"(rtol {r.rtol:g}, atol {r.atol:g})  {state}")
    if not report.passed:
        failed = ", ".join(r.kind for r in report.rows if not r.passed)
        print(f"gradient check FAILED for: {failed}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    print("gradient check passed")
    return EXIT_OK


def _cmd_precompute_cache(args):
    import numpy as np

    from ..operators import load_operators, precompute, save_operators
    from .experiments import _timing_instance

    cfg = _build(args, getattr(args, "kind", None))
    model, _ = _timing_instance(cfg)
    ops = precompute(model, "dense")
    out_dir = _out_dir(args, "cache")
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "operators.gprc")
    save_operators(ops, path)
    reloaded = load_operators(path, model)
    for i in range(model.t):
        if not np.array_equal(reloaded.j_cov(i), ops.j_cov(i)):
            print("cache verification failed", file=sys.stderr)
            return EXIT_CHECK_FAILED
    size = os.path.getsize(path)
    print(f"wrote operator cache {path} ({size} bytes, T={model.t}, M={model.m}, "
          f"n={model.n}); round-trip verified")
    return EXIT_OK


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="gpcorrect",
        description="Correct GP maps for known measurement-location errors "
                    "and reproduce the companion experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p1 = sub.add_parser("experiment-1d", help="1D spatially varying location-noise run")
    _add_common(p1)

    p2 = sub.add_parser("experiment-2d", help="2D constant sensor-bias run")
    _add_common(p2)

    pt = sub.add_parser("timing", help="correction vs full-retrain timing table")
    _add_common(pt)
    pt.add_argument("--kind", choices=("one_d", "two_d", "custom"),
                    help="instance family (default from config, else one_d)")

    pg = sub.add_parser("check-gradients", help="oracle vs analytic derivative sweep")
    pg.add_argument("--seed", type=int, default=0)
    pg.add_argument("--instances", type=int, default=60)
    pg.add_argument("--out", help="also write gradient_check.csv here")

    pc = sub.add_parser("precompute-cache", help="build and store dense operators")
    _add_common(pc)
    pc.add_argument("--kind", choices=("one_d", "two_d", "custom"))

    args = parser.parse_args(argv)
    try:
        if args.command == "experiment-1d":
            return _cmd_experiment(args, "one_d")
        if args.command == "experiment-2d":
            return _cmd_experiment(args, "two_d")
        if args.command == "timing":
            return _cmd_timing(args)
        if args.command == "check-gradients":
            return _cmd_check_gradients(args)
        if args.command == "precompute-cache":
            return _cmd_precompute_cache(args)
        parser.error(f"unknown command {args.command!r}")
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except GpCorrectError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
