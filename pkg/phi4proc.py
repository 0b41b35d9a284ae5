#!/usr/bin/env python3

import sys
import os
import argparse
import configparser
import io
import logging

from phi4sqe.config import MODES, config_parser, parse_config, thread_count
from phi4sqe.errors import ConfigError
from phi4sqe.run import EXIT_CONFIG, run


# Command-line flags overriding config keys: flag -> (section, key)
OVERRIDES = {
    "N": ("model", "N"),
    "lam": ("model", "lambda"),
    "m0": ("model", "m0"),
    "T": ("model", "T"),
    "dt": ("model", "dt"),
    "K": ("model", "grid_K"),
    "M": ("model", "grid_M"),
    "seed": ("model", "seed"),
    "ensemble": ("run", "ensemble"),
    "output": ("run", "output_dir"),
}


def apply_overrides(text, mode, values):
    parser = config_parser()
    parser.read_string(text)
    for flag, (section, key) in list(OVERRIDES.items()) + [("mode", ("run", "mode"))]:
        value = mode if flag == "mode" else values.get(flag)
        if value is None:
            continue
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, str(value))
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()


def make_parser():
    parser = argparse.ArgumentParser(description="Φ⁴₃ Stochastic Quantization Processor")
    parser.add_argument("-v", "--verbose", default=False, action="store_true", help="verbose output")
    subparsers = parser.add_subparsers(dest="mode", required=True, metavar="MODE")

    for mode in MODES:
        sub = subparsers.add_parser(mode, help=f"run '{mode}'")
        sub.add_argument("-c", "--config", default=None, metavar="FILE", help="INI configuration (defaults if omitted)")
        sub.add_argument("-o", "--out", "--output", dest="output", default=None, metavar="DIR",
                         help="output directory")
        if mode == "renorm-table":
            sub.add_argument("-N", "--N-max", dest="N", default=None, type=int, help="maximum cutoff level")
            sub.add_argument("--m0", default=None, type=float, help="mass m0 > 0")
        if mode == "simulate":
            sub.add_argument("-N", "--N", dest="N", default=None, type=int, help="cutoff level")
            sub.add_argument("--m0", default=None, type=float, help="mass m0 > 0")
            sub.add_argument("--lambda", "--lam", dest="lam", default=None, type=float, help="coupling 0 <= λ <= λ0")
            sub.add_argument("-T", "--T", dest="T", default=None, type=float, help="time horizon")
            sub.add_argument("--dt", default=None, type=float, help="time step")
            sub.add_argument("--K", dest="K", default=None, type=int, help="spectral cutoff (0 for 2^(N+2))")
            sub.add_argument("--M", dest="M", default=None, type=int, help="physical grid size (0 for 4K+1)")
            sub.add_argument("--seed", default=None, type=int, help="global seed")
            sub.add_argument("-e", "--ensemble", default=None, type=int, help="number of trajectories")
    return parser


def main():
    args = make_parser().parse_args()

    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")

    # Read configuration and apply command-line overrides
    try:
        text = ""
        if args.config is not None:
            if not os.path.isfile(args.config):
                print(f"Error! Config file '{args.config}' not found!")
                return EXIT_CONFIG
            with open(args.config, "r", encoding="utf-8") as f:
                text = f.read()
        config = parse_config(apply_overrides(text, args.mode, vars(args)))
        threads = thread_count()
    except (ConfigError, configparser.Error) as e:
        print(f"Error! Invalid configuration!\n-> {e}")
        return EXIT_CONFIG

    return run(config, threads)


if __name__ == "__main__":
    sys.exit(main())
