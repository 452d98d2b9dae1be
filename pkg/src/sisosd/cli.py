"""Command line front-end for the link simulator."""

import argparse
import sys

from .harness import SimConfig, normalize, parse_config_file, run_experiment


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="sisosd-sim",
        description="Iterative MIMO detection/decoding simulator with "
                    "instrumented soft-input soft-output sphere detection.")
    p.add_argument("--config", metavar="PATH",
                   help="flat key = value config file (see README)")
    p.add_argument("--ebn0", metavar="DB[,DB...]",
                   help="override Eb/N0 points in dB")
    p.add_argument("--iterations", type=int, metavar="N",
                   help="override detector/decoder iteration count")
    p.add_argument("--variant", metavar="V",
                   help="override the search variant: t, ch, pr, or "
                        "schedule:v1,v2,... (one per iteration)")
    p.add_argument("--frames", type=int, metavar="N",
                   help="override the frame count")
    p.add_argument("--seed", type=int, metavar="N",
                   help="override the master seed")
    p.add_argument("--out", metavar="DIR",
                   help="override the output directory for results files")
    p.add_argument("--workers", type=int, metavar="N",
                   help="override the worker pool size (does not change "
                        "any output byte)")
    p.add_argument("--verify-oracle", action="store_true",
                   help="cross-check every channel use against the "
                        "brute-force reference (small runs only)")
    p.add_argument("--verify-all-variants", action="store_true",
                   help="run every channel use under all three variants "
                        "and record counters for each")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config_file(args.config) if args.config else SimConfig()
        if args.ebn0 is not None:
            cfg.ebn0_db = tuple(float(t) for t in args.ebn0.split(","))
        if args.iterations is not None:
            cfg.iterations = args.iterations
        if args.variant is not None:
            cfg.schedule = args.variant
        if args.frames is not None:
            cfg.frames = args.frames
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_dir = args.out
        if args.workers is not None:
            cfg.workers = args.workers
        if args.verify_oracle:
            cfg.verify_oracle = True
        if args.verify_all_variants:
            cfg.verify_all_variants = True
        cfg = normalize(cfg)
        results = run_experiment(cfg)
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    for ebn0_db, reports in results.items():
        print(f"Eb/N0 = {ebn0_db:g} dB "
              f"({cfg.frames} frames x {cfg.info_bits} info bits, "
              f"seed {cfg.seed})")
        print("  it variant  nodes/use   mults/use        ber")
        for r in reports:
            print(f"  {r.iteration:2d} {r.variant:>7s}  {r.expanded_nodes_avg:9.2f}"
                  f"   {r.mults_total_avg:9.2f}  {r.ber:.3e}")
    if cfg.out_dir:
        print(f"results written to {cfg.out_dir}")
    return 0
