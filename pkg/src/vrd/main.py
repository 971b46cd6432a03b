"""
Main Module for the VRD command-line tool

Subcommands:
1. infer    - run one VRD layer on a VRDT field
2. train    - train a network on synthetic segmentation data
3. green    - export a Green's function as PGM + CSV
4. bench    - time forward/backward passes over lattice sizes
5. selftest - run the oracle suite

Exit codes: 0 success, 1 selftest failure, 2 parse/format error,
3 shape mismatch, 4 training divergence.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd
import scipy.fft

from . import config
from .bench import Benchmarker, reference_ratio, scaling_ratios
from .core import green_function, vrd_forward
from .exceptions import (
    ConfigError,
    FieldError,
    FormatError,
    ShapeMismatchError,
    TrainingDivergedError,
    VrdError,
)
from .formats import read_vrdp, read_vrdt, write_pgm, write_vrdt
from .lattice import Field
from .metrics import predict
from .selftest import run_selftest
from .trainer import Trainer, load_config, parse_grid

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SELFTEST_FAILED = 1
EXIT_PARSE = 2
EXIT_SHAPE = 3
EXIT_DIVERGED = 4


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(prog="vrd", description="Variational Reaction-Diffusion toolkit")
    parser.add_argument("--threads", type=int, default=config.FFT_WORKERS,
                        help="worker cap for FFT transforms (-1: all cores)")
    sub = parser.add_subparsers(dest="command", required=True)

    infer = sub.add_parser("infer", help="run VRD inference on a field")
    infer.add_argument("--params", required=True, help="VRDP parameter file")
    infer.add_argument("--input", required=True, help="VRDT input field (N_i channels)")
    infer.add_argument("--output", required=True, help="VRDT output field (N_o channels)")
    infer.add_argument("--labels", help="optional VRDT file for per-pixel argmax labels")

    train = sub.add_parser("train", help="train a network on synthetic data")
    train.add_argument("--config", required=True, help="training config (key = value lines)")
    train.add_argument("--out", required=True, help="output VRDP file")

    green = sub.add_parser("green", help="export the Green's function of Delta - lambda")
    green.add_argument("--lambda", dest="lam", type=float, required=True, help="reaction coefficient > 0")
    green.add_argument("--size", required=True, help="lattice size HxW")
    green.add_argument("--out", required=True, help="output PGM file (raw values go to .csv)")

    bench = sub.add_parser("bench", help="time forward/backward passes")
    bench.add_argument("--sizes", default=",".join(str(s) for s in config.BENCH_DEFAULTS["sizes"]),
                       help="comma-separated square edge lengths")
    bench.add_argument("--rect", action="append", default=[], help="extra rectangular grid HxW (repeatable)")
    bench.add_argument("--ni", type=int, default=config.BENCH_DEFAULTS["n_in"], help="input channels")
    bench.add_argument("--no", type=int, default=config.BENCH_DEFAULTS["n_out"], help="output channels")
    bench.add_argument("--reps", type=int, default=config.BENCH_DEFAULTS["repetitions"], help="repetitions")
    bench.add_argument("--seed", type=int, default=config.BENCH_DEFAULTS["seed"], help="random seed")
    bench.add_argument("--csv", required=True, help="output CSV file")

    selftest = sub.add_parser("selftest", help="run the oracle suite")
    selftest.add_argument("--seed", type=int, default=0, help="random seed")

    return parser.parse_args(argv)


def cmd_infer(args) -> int:
    params = read_vrdp(args.params)
    s_i = read_vrdt(args.input)
    if s_i.channels != params.n_in:
        raise ShapeMismatchError(
            f"input {args.input} has {s_i.channels} channels, parameters expect {params.n_in}")
    s_o, _ = vrd_forward(s_i, params)
    write_vrdt(args.output, s_o)
    print(f"Output scores saved to {args.output}")
    if args.labels:
        labels = predict(s_o).astype(np.float64)
        write_vrdt(args.labels, Field(labels[:, :, np.newaxis], check=False))
        print(f"Labels saved to {args.labels}")
    return EXIT_OK


def cmd_train(args) -> int:
    train_config = load_config(args.config)
    result = Trainer(train_config).run(args.out)
    history = result["history"]
    if history:
        print(f"Loss: first epoch {history[0]:.6f}, last epoch {history[-1]:.6f}")
    for name, value in result["metrics"].items():
        print(f"Held-out {name}: {value:.4f}")
    return EXIT_OK


def cmd_green(args) -> int:
    height, width = parse_grid(args.size)
    if not args.lam > 0:
        raise ConfigError(f"lambda must be positive, got {args.lam}")
    g = green_function(args.lam, height, width)
    values = g.channel(0)
    write_pgm(args.out, values, peak=float(values.max()))
    csv_path = Path(args.out).with_suffix(".csv")
    pd.DataFrame(values).to_csv(csv_path, header=False, index=False, float_format="%.17g")
    print(f"Green's function image saved to {args.out}")
    print(f"Raw values saved to {csv_path}")
    return EXIT_OK


def _parse_sizes(text: str) -> List[int]:
    try:
        sizes = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"bad size list {text!r}")
    if any(s < 1 for s in sizes):
        raise ConfigError(f"bad size list {text!r}")
    return sizes


def cmd_bench(args) -> int:
    grids = [(s, s) for s in _parse_sizes(args.sizes)] + [parse_grid(r) for r in args.rect]
    bench = Benchmarker(args.ni, args.no, args.reps, args.seed)
    df = bench.run(grids)
    df[["L", "t_fwd_ms", "t_bwd_ms"]].to_csv(args.csv, index=False)
    print(df.to_string(index=False))
    square = df[df["height"] == df["width"]]
    if len(square) > 1:
        ratios = ", ".join(f"{r:.2f}" for r in scaling_ratios(square))
        print(f"Forward time ratios between successive sizes: {ratios}")
    ref = reference_ratio(df)
    if ref is not None:
        print(f"511x255 time relative to reported figures: forward {ref['forward']:.2f}x, "
              f"backward {ref['backward']:.2f}x")
    print(f"Benchmark saved to {args.csv}")
    return EXIT_OK


def cmd_selftest(args) -> int:
    table = run_selftest(args.seed)
    with pd.option_context("display.max_rows", None, "display.width", 120):
        print(table.to_string(index=False, formatters={"error": "{:.3e}".format,
                                                       "tolerance": "{:.1e}".format}))
    failed = int((table["status"] != "PASS").sum())
    print(f"\n{len(table) - failed} passed, {failed} failed")
    return EXIT_OK if failed == 0 else EXIT_SELFTEST_FAILED


COMMANDS = {
    "infer": cmd_infer,
    "train": cmd_train,
    "green": cmd_green,
    "bench": cmd_bench,
    "selftest": cmd_selftest,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main function to run the VRD tool."""
    logging.basicConfig(level=config.LOG_LEVEL, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    args = parse_args(argv)
    try:
        with scipy.fft.set_workers(args.threads):
            return COMMANDS[args.command](args)
    except ShapeMismatchError as e:
        print(f"Error: shape mismatch: {e}", file=sys.stderr)
        return EXIT_SHAPE
    except TrainingDivergedError as e:
        print(f"Error: training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (FormatError, ConfigError, FieldError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except VrdError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_PARSE


def main_entry():
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
