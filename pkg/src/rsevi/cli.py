"""Command-line entry point: ``rsevi {simulate,interpolate,evaluate,bandwidth}``.

Exit codes: 0 success, 2 input error, 3 consistency error, 4 numeric failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .formats import FormatError, read_json, write_json
from .pipeline import (ConsistencyError, RunConfig, evaluate_dirs, metrics_csv, run_bandwidth,
                       run_interpolate, run_simulate)
from .selfsup import LossWeights, OptimizerConfig

EXIT_OK, EXIT_INPUT, EXIT_CONSISTENCY, EXIT_NUMERIC = 0, 2, 3, 4
THREADS_ENV = "RSEVI_THREADS"

log = logging.getLogger("rsevi")


def _add_run_flags(p: argparse.ArgumentParser):
    d, w, o = RunConfig(), LossWeights(), OptimizerConfig()
    p.add_argument("--T", type=int, default=d.T, help="displacement bins")
    p.add_argument("--subbins", type=int, default=d.subbins, help="voxel sub-bins per bin")
    p.add_argument("--sh", type=int, default=d.s_h, help="sub-rows per weight-map element")
    p.add_argument("--st", type=int, default=d.s_t, help="sub-times per weight-map element")
    p.add_argument("--weightmap", choices=("analytic", "sampled"), default=d.weight_mode)
    p.add_argument("--lambda-f", type=float, default=w.lambda_f)
    p.add_argument("--lambda-rs", type=float, default=w.lambda_rs)
    p.add_argument("--lambda-gs", type=float, default=w.lambda_gs)
    p.add_argument("--factor", type=int, default=d.factor, help="GS frames to produce (K)")
    p.add_argument("--iters", type=int, default=o.max_iters)
    p.add_argument("--step", type=float, default=o.step_size, help="largest field update per step, pixels")
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--threads", type=int, default=1)


def _threads(args) -> int:
    env = os.environ.get(THREADS_ENV)
    n = int(env) if env else args.threads
    if n < 1:
        raise FormatError("thread count must be >= 1")
    return n


def config_from_args(args) -> RunConfig:
    return RunConfig(
        T=args.T, subbins=args.subbins, s_h=args.sh, s_t=args.st, weight_mode=args.weightmap,
        weights=LossWeights(args.lambda_f, args.lambda_rs, args.lambda_gs),
        optimizer=OptimizerConfig(step_size=args.step, max_iters=args.iters, n_latent=args.factor,
                                  seed=args.seed),
        factor=args.factor, seed=args.seed, threads=_threads(args),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsevi", description="Rolling-shutter frames plus events to GS video.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="RS frames, events and oracle fields from a GS frame directory")
    p.add_argument("frames", help="directory of numbered PGM/PPM/FRM1 frames")
    p.add_argument("--fps", type=float, required=True, help="GS input frame rate")
    p.add_argument("--out", required=True)
    p.add_argument("--C", type=float, default=0.3, help="contrast threshold")
    p.add_argument("--rs-period", type=float, help="seconds between RS frame starts (default H/fps)")
    p.add_argument("--rs-readout", type=float, help="first-to-last row time (default (H-1)/fps)")
    p.add_argument("--motion", help="motion script JSON; enables oracle DFB1 fields")
    _add_run_flags(p)

    p = sub.add_parser("interpolate", help="K GS frames from two RS frames and events")
    p.add_argument("rs0")
    p.add_argument("rs1")
    p.add_argument("events")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", help="manifest JSON giving the RS exposure times")
    p.add_argument("--times0", nargs=2, type=float, metavar=("T_START", "T_END"))
    p.add_argument("--times1", nargs=2, type=float, metavar=("T_START", "T_END"))
    p.add_argument("--gt", help="ground-truth GS frame directory to score against")
    p.add_argument("--margin", type=int, default=0, help="border excluded from scoring")
    _add_run_flags(p)

    p = sub.add_parser("evaluate", help="PSNR/SSIM of predicted against ground-truth frames")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--margin", type=int, default=0)
    p.add_argument("--out", help="CSV path (stdout if omitted)")

    p = sub.add_parser("bandwidth", help="raw data volume of RS frames plus events vs. high-rate video")
    p.add_argument("events")
    p.add_argument("--rs-fps", type=float, required=True)
    p.add_argument("--target-fps", type=float, required=True)
    p.add_argument("--seconds", type=float, required=True)
    p.add_argument("--width", type=int, default=0, help="sensor width for CSV events")
    p.add_argument("--height", type=int, default=0, help="sensor height for CSV events")
    p.add_argument("--out", help="JSON path (stdout if omitted)")
    return parser


def _dispatch(args):
    if args.command == "simulate":
        config = config_from_args(args)
        motion = read_json(args.motion) if args.motion else None
        m = run_simulate(args.frames, args.fps, args.out, args.C, args.rs_period, args.rs_readout,
                         motion, config)
        print(f"{len(m['rs_frames'])} RS frames at {m['rs_frame_rate']:.4f} fps, {m['events']['count']} events")
    elif args.command == "interpolate":
        config = config_from_args(args)
        rep = run_interpolate(args.rs0, args.rs1, args.events, args.out, config, args.manifest,
                              args.times0, args.times1, args.gt, args.margin)
        msg = f"{len(rep['frames'])} GS frames, loss {rep['loss_initial']:.6g} -> {rep['loss_final']:.6g}"
        if "evaluation" in rep:
            msg += f", mean PSNR {rep['evaluation']['mean_psnr']:.2f} dB"
        print(msg)
    elif args.command == "evaluate":
        text = metrics_csv(evaluate_dirs(args.pred, args.gt, args.margin))
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    elif args.command == "bandwidth":
        rep = run_bandwidth(args.events, args.rs_fps, args.target_fps, args.seconds, args.width, args.height)
        if args.out:
            write_json(args.out, rep)
        else:
            print(json.dumps(rep, indent=2, sort_keys=True))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _dispatch(args)
    except ConsistencyError as exc:
        log.error("%s", exc)
        return EXIT_CONSISTENCY
    except FloatingPointError as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except (FormatError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
