"""Command-line entry point.

    voltnet run --scenario PATH|NAME [--duration S] [--seed N]
                [--clock virtual|realtime] [--export-dir DIR] [--api-port P]
    voltnet bench --branches N [N ...] [--rounds 10] [--clock ...]
                [--export-dir DIR] [--seed N]
    voltnet validate --scenario PATH|NAME

Exit codes: 0 success, 2 validation failure, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import builtin, iec104
from .coordinator import Metrics
from .devices import CONTROL
from .netsim.core import s_to_ns
from .runner import build_simulation, run_simulation
from .scenario import ConfigError, load_scenario, validate_config

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="voltnet",
        description="Deterministic co-simulation of power grids and their "
                    "SCADA networks under cyberattack")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a scenario")
    run_p.add_argument("--scenario", required=True,
                       help="scenario file or builtin name "
                            f"({', '.join(sorted(builtin.REGISTRY))})")
    run_p.add_argument("--duration", type=float, default=None,
                       help="override scenario duration (seconds)")
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--clock", choices=["virtual", "realtime"],
                       default=None)
    run_p.add_argument("--export-dir", default=None)
    run_p.add_argument("--api-port", type=int, default=None,
                       help="serve the operator API on this loopback port")

    bench_p = sub.add_parser("bench", help="scaling benchmark")
    bench_p.add_argument("--branches", type=int, nargs="+", required=True)
    bench_p.add_argument("--rounds", type=int, default=10)
    bench_p.add_argument("--clock", choices=["virtual", "realtime"],
                         default="virtual")
    bench_p.add_argument("--seed", type=int, default=1)
    bench_p.add_argument("--export-dir", default=None)

    val_p = sub.add_parser("validate", help="validate a scenario file")
    val_p.add_argument("--scenario", required=True)

    args = parser.parse_args(argv)
    try:
        if args.command == "validate":
            return _cmd_validate(args)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "bench":
            return _cmd_bench(args)
    except ConfigError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_validate(args) -> int:
    try:
        config = load_scenario(args.scenario)
    except ConfigError as exc:
        print(f"invalid: {exc}")
        return EXIT_VALIDATION
    errors = validate_config(config)
    if errors:
        for error in errors:
            print(f"invalid: {error}")
        return EXIT_VALIDATION
    print(f"ok: scenario {config.name!r} "
          f"({len(config.grid.buses)} buses, {len(config.rtus)} RTUs, "
          f"{len(config.ict_nodes)} ICT nodes)")
    return EXIT_OK


def _default_export_dir(config) -> Path:
    return Path("exports") / f"{config.name}-seed{config.seed}"


def _cmd_run(args) -> int:
    config = load_scenario(args.scenario)
    if args.seed is not None:
        config.seed = args.seed
    if args.clock is not None:
        config.clock = args.clock
    export_dir = Path(args.export_dir) if args.export_dir \
        else _default_export_dir(config)
    sim = build_simulation(config, export_dir)

    api = None
    poll = None
    if args.api_port is not None:
        from .serviceapi import ServiceApi
        api = ServiceApi(sim, args.api_port)
        poll = api.pump
        print(f"service API on http://127.0.0.1:{api.port}/api/status")

    duration = args.duration if args.duration is not None \
        else config.duration_s
    print(f"running {config.name!r} for {duration:g} s "
          f"({config.clock} clock, seed {config.seed})")
    run_simulation(sim, duration, poll=poll)
    if api is not None:
        api.pump()
        api.close()
    print(f"done at t={sim.now_s:g} s; {len(sim.events.entries)} events; "
          f"exports in {export_dir}")
    return EXIT_OK


def _cmd_bench(args) -> int:
    print("branches,S,hop_delay_ms_mean,hop_delay_ms_ci98,"
          "coordination_overhead_ms_mean,solve_time_ms_mean,solves")
    rows = []
    for n in args.branches:
        row = run_benchmark(n, rounds=args.rounds, clock=args.clock,
                            seed=args.seed,
                            export_dir=args.export_dir)
        rows.append(row)
        print(",".join(str(v) for v in row))
    return EXIT_OK


def run_benchmark(n: int, rounds: int = 10, clock: str = "virtual",
                  seed: int = 1, export_dir=None, settle_s: float = 5.0,
                  round_period_s: float = 4.0):
    """Drive `rounds` of read and control traffic over the n-branch grid.

    Per round the MTU interrogates every RTU (reads all voltage points)
    and commands every generator to 50% or 100% output, alternating.
    """
    config = builtin.benchmark(n, seed=seed)
    config.clock = clock
    duration = settle_s + rounds * round_period_s + 3.0
    config.duration_s = duration
    path = None
    if export_dir is not None:
        path = Path(export_dir) / f"benchmark-{n}-seed{seed}"
    sim = build_simulation(config, path)

    gen_points = [
        (rtu.coa, p)
        for rtu in config.rtus for p in rtu.points
        if p.direction == CONTROL and p.type_id == iec104.C_SE_NC_1
    ]

    def do_round(index: int) -> None:
        for link in sim.mtu.config.rtus:
            sim.mtu._interrogate(link)
        for coa, point in gen_points:
            inj = sim.model.injections[point.element]
            level = 0.5 if index % 2 == 0 else 1.0
            sim.mtu.send_command(coa, point.ioa, inj.max_p_mw * level)

    for i in range(rounds):
        sim.sched.call_at(s_to_ns(settle_s + i * round_period_s),
                          lambda i=i: do_round(i))

    run_simulation(sim)

    hops = sim.net.all_hop_delays_ns()
    hop_mean, hop_lo, hop_hi = Metrics.mean_ci98([h / 1e6 for h in hops])
    coord = sim.coordinator.metrics.coordination_overhead_s
    coord_mean, _, _ = Metrics.mean_ci98([s * 1e3 for s in coord])
    solve = sim.coordinator.metrics.solve_time_s
    solve_mean, _, _ = Metrics.mean_ci98([s * 1e3 for s in solve])
    counts = builtin.benchmark_counts(n)
    return (n, counts["S"], round(hop_mean, 4),
            round(hop_hi - hop_mean, 4) if hops else 0.0,
            round(coord_mean, 4), round(solve_mean, 3), len(solve))


if __name__ == "__main__":
    sys.exit(main())
