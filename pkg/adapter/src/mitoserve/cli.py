"""Command line: serve the scripted stand-in model over stdio or TCP.

Slide ids are the annotation file stems; noise parameters mirror the
engine's synthetic oracle so shared seeds reproduce identical bytes.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .server import AdapterConfig, serve_stdio, serve_tcp
from .standin import StandInConfig, StandInModel, degraded_config


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mitoserve")
    transport = p.add_mutually_exclusive_group(required=True)
    transport.add_argument("--stdio", action="store_true", help="serve over stdin/stdout")
    transport.add_argument("--listen", metavar="HOST:PORT", help="serve over TCP")
    p.add_argument("--gt", nargs="+", required=True,
                   help="annotation files; slide id = file stem")
    p.add_argument("--mode", choices=["perfect", "noisy", "degraded"], default="perfect")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jitter-sd", type=float, default=0.0)
    p.add_argument("--fp-rate", type=float, default=0.0)
    p.add_argument("--fn-rate", type=float, default=0.0)
    p.add_argument("--score-noise-sd", type=float, default=0.0)
    p.add_argument("--max-connections", type=int, default=None,
                   help="stop after this many TCP connections (default: serve forever)")
    return p


def model_from_args(args) -> StandInModel:
    if args.mode == "degraded":
        cfg = degraded_config(args.seed)
    elif args.mode == "noisy":
        cfg = StandInConfig(
            mode="noisy",
            rng_seed=args.seed,
            position_jitter_sd=args.jitter_sd,
            fp_rate=args.fp_rate,
            fn_rate=args.fn_rate,
            score_noise_sd=args.score_noise_sd,
        )
    else:
        cfg = StandInConfig(mode="perfect", rng_seed=args.seed)
    model = StandInModel(cfg=cfg)
    for path in args.gt:
        model.add_slide_file(Path(path).stem, path)
    return model


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    model = model_from_args(args)
    cfg = AdapterConfig(detect=model.detect, adjust=model.adjust, classify=model.classify)
    if args.stdio:
        serve_stdio(cfg)
    else:
        host, _, port = args.listen.rpartition(":")
        serve_tcp(cfg, host or "127.0.0.1", int(port), args.max_connections)
    return 0


if __name__ == "__main__":
    sys.exit(main())
