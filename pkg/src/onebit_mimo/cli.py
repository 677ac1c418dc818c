"""Command-line front end: BER sweeps, single precode runs and timing."""

from __future__ import annotations

import argparse
import dataclasses
import statistics
import sys
import time

import numpy as np

from .errors import NumericalError
from .mimo import SymbolBlock, gen_rayleigh_channel, make_constellation, map_bits
from .precoding import BcdConfig
from .sim import PRECODERS, SimConfig, load_config, run_sweep, write_results


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="onebit-mimo",
        description="One-bit massive MIMO downlink precoding simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo BER sweep from a config file")
    sim.add_argument("--config", required=True, help="path to a key=value config file")
    sim.add_argument("--snr", help="override SNR grid, comma-separated dB values")
    sim.add_argument("--trials", type=int, help="override the number of channel realizations")
    sim.add_argument("--seed", type=int, help="override the base seed")
    sim.add_argument("--precoders", help="override the precoder list, comma-separated")
    sim.add_argument("--parallelism", type=int, help="override the worker count")
    sim.add_argument("--out", default="ber_results.csv", help="output CSV path")

    pre = sub.add_parser("precode", help="precode a single seeded instance and report the solution")
    pre.add_argument("--config", help="optional config file supplying dimensions and solver knobs")
    pre.add_argument("--N", type=int, default=16, help="BS antennas")
    pre.add_argument("--K", type=int, default=4, help="users")
    pre.add_argument("--T", type=int, default=4, help="block length")
    pre.add_argument("--qam-order", type=int, default=2, help="QAM order L (2 for 16-QAM)")
    pre.add_argument("--power", type=float, default=1.0, help="total BS power P")
    pre.add_argument("--seed", type=int, default=0, help="instance seed")
    pre.add_argument("--precoder", choices=sorted(PRECODERS), default="bcd-fista")
    pre.add_argument("--trace-out", help="write the solver objective trace to this CSV")

    bench = sub.add_parser("bench", help="report per-precoder wall-clock statistics")
    bench.add_argument("--config", required=True, help="path to a key=value config file")
    bench.add_argument("--reps", type=int, default=5, help="instances to time per precoder")
    return parser


def _apply_overrides(cfg: SimConfig, args) -> SimConfig:
    updates = {}
    if args.snr is not None:
        updates["snr_db_grid"] = tuple(float(v) for v in args.snr.split(","))
    if args.trials is not None:
        updates["trials"] = args.trials
    if args.seed is not None:
        updates["base_seed"] = args.seed
    if args.precoders is not None:
        updates["precoder_list"] = tuple(p.strip() for p in args.precoders.split(","))
    if args.parallelism is not None:
        updates["parallelism"] = args.parallelism
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _draw_instance(N, K, T, qam_order, seed):
    rng = np.random.default_rng(np.random.SeedSequence((seed,)))
    c = make_constellation(qam_order)
    H = gen_rayleigh_channel(K, N, rng)
    bits = rng.integers(0, 2, size=K * T * c.bits_per_symbol, dtype=np.int64)
    S = SymbolBlock(map_bits(bits, c).reshape(K, T), c)
    return H, S


def _cmd_simulate(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    records = run_sweep(cfg)
    write_results(records, args.out)
    print(f"wrote {len(records)} cells to {args.out}")
    return 0


def _cmd_precode(args) -> int:
    if args.config is not None:
        cfg = load_config(args.config)
        n, k, t, order, power, bcd = cfg.N, cfg.K, cfg.T, cfg.qam_order, cfg.power, cfg.bcd
    else:
        n, k, t, order, power, bcd = args.N, args.K, args.T, args.qam_order, args.power, BcdConfig()
    H, S = _draw_instance(n, k, t, order, args.seed)
    result = PRECODERS[args.precoder](H, S, power, bcd)
    print(f"precoder: {args.precoder}")
    print(f"d: {result.d!r}")
    gap = "n/a" if result.binarity_gap is None else repr(result.binarity_gap)
    print(f"binarity_gap: {gap}")
    obj = result.final_objective
    print(f"minimax_objective: {obj.value!r} (argmax row {obj.row}, col {obj.col})")
    print(f"bcd_iterations: {result.bcd_iterations}")
    print(f"fista_iterations_total: {result.fista_iterations_total}")
    if args.trace_out:
        lines = ["index,lambda,f_smooth_after_xd,f_smooth_after_v,f_exact_after_v,penalty_gap,fista_iters"]
        for it in result.trace:
            lines.append(
                f"{it.index},{it.lam!r},{it.f_smooth_after_xd!r},{it.f_smooth_after_v!r},"
                f"{it.f_exact_after_v!r},{it.penalty_gap!r},{it.fista_iters}"
            )
        with open(args.trace_out, "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
        print(f"trace: {args.trace_out}")
    return 0


def _cmd_bench(args) -> int:
    cfg = load_config(args.config)
    print(f"timing {args.reps} instances at N={cfg.N}, K={cfg.K}, T={cfg.T}, L={cfg.qam_order}")
    for precoder in cfg.precoder_list:
        times_ms = []
        for rep in range(args.reps):
            H, S = _draw_instance(cfg.N, cfg.K, cfg.T, cfg.qam_order, cfg.base_seed + rep)
            t0 = time.perf_counter()
            PRECODERS[precoder](H, S, cfg.power, cfg.bcd)
            times_ms.append((time.perf_counter() - t0) * 1e3)
        spread = statistics.pstdev(times_ms) if len(times_ms) > 1 else 0.0
        print(
            f"{precoder:>10s}: mean {statistics.fmean(times_ms):9.2f} ms  "
            f"std {spread:8.2f} ms  min {min(times_ms):9.2f} ms  max {max(times_ms):9.2f} ms"
        )
    return 0


_COMMANDS = {"simulate": _cmd_simulate, "precode": _cmd_precode, "bench": _cmd_bench}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
