"""``migdetect`` command line.

Exit codes: 0 on success, 1 on validation or parse errors, 2 on numeric
failures.
"""

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ..exceptions import NumericError, ValidationError
from .config import ExperimentConfig, load_config
from .experiments import (
    run_bench,
    run_distances,
    run_sweep,
    save_projections,
    save_training,
)
from .matrixio import read_matrices

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERIC = 2


def _cmd_gen_training(cfg, args):
    ts = save_training(cfg, args.out)
    print(f"wrote {ts.clutter_only.shape[0]} clutter-only and "
          f"{ts.with_target.shape[0]} target-bearing matrices to {args.out}")


def _cmd_learn(cfg, args):
    data = None
    if args.training:
        src = Path(args.training)
        parts = [read_matrices(src / "training_clutter.migw"),
                 read_matrices(src / "training_target.migw")]
        data = np.concatenate(parts)
    fitted = save_projections(cfg, args.out, data)
    failed = [f"{ms}_M{m}" for (ms, m), est in fitted.items()
              if isinstance(est, str)]
    print(f"learned {len(fitted) - len(failed)} projections into {args.out}")
    if failed:
        raise NumericError("projection learning failed for "
                           + ", ".join(failed))


def _cmd_sweep(cfg, args):
    manifest = run_sweep(cfg, args.out, args.jobs)
    done = sum(1 for r in manifest["runs"] if r["error"] is None)
    print(f"{done} detector runs written to {args.out} "
          f"({manifest['wall_time_s']:.1f} s)")
    if manifest["errors"]:
        print(f"{len(manifest['errors'])} failures recorded in manifest.json",
              file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_distances(cfg, args):
    summary = run_distances(cfg, args.out)
    for name, s in summary.items():
        print(f"{name}: clutter {s['clutter_mean']:.4g}  "
              f"target {s['target_mean']:.4g}  "
              f"separation {s['separation_pooled_std']:.2f} pooled std")


def _cmd_bench(cfg, args):
    for kind, name, n, k, m, t, _, label in run_bench(cfg, args.out):
        print(f"{kind:8s} {name:10s} N={n:<3d} K={k:<3d} M={m:<2d} "
              f"{t * 1e3:10.3f} ms  {label}")


COMMANDS = {
    "gen-training": (_cmd_gen_training, "synthesize the training set"),
    "learn-projection": (_cmd_learn, "learn projections for each measure and M"),
    "sweep": (_cmd_sweep, "thresholds and Pd-vs-SCR curves"),
    "distances": (_cmd_distances, "distance clouds of the training set"),
    "bench": (_cmd_bench, "timing of means and gradients"),
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="migdetect",
        description="Geometric detectors for targets in nonhomogeneous "
                    "clutter.")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", metavar="PATH",
                       help="key = value configuration file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", metavar="DIR",
                       help="output directory (overrides output_dir)")
        if name == "learn-projection":
            p.add_argument("--training", metavar="DIR",
                           help="read the training set written by "
                                "gen-training instead of regenerating it")
        if name == "sweep":
            p.add_argument("--jobs", type=int,
                           help="worker processes (default: MIG_THREADS or "
                                "all CPUs)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else ExperimentConfig()
        if args.seed is not None:
            cfg = cfg.with_(seed=args.seed)
        if args.out is None:
            args.out = cfg.output_dir
        handler = COMMANDS[args.command][0]
        return handler(cfg, args) or EXIT_OK
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    raise SystemExit(main())
