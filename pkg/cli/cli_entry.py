"""
cli_entry.py - CLI Entry Point

Supports:
- Command-line argument mode (invert, uniform, network, optimize, simulate, report, plot)
- Interactive mode (no subcommand)

Exit codes: 0 success, 2 validation error, 3 numeric or infeasibility error.
"""

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

sys.path.insert(0, str(Path(__file__).parent.parent))

from core import (
    EXIT_OK,
    EXIT_VALIDATION,
    CurbflowError,
    InvalidInputError,
    OutputFormat,
    PlotKind,
    ServiceDist,
    SimConfig,
    SolveMode,
    build_report,
    configure_logging,
    emit_plot_data,
    exit_code_for,
    invert_summary,
    load_scenario,
    report_payload,
    uniform_summary,
    write_output,
)
from core.report import TOOL_VERSION, normalize

from .cli_interactive import interactive_mode

DEFAULT_OUT = "curbflow_out"


def _add_global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    """Global flags; subparser copies only override when given"""
    def default(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--scenario", type=str, default=default(None), help="Scenario JSON file")
    parser.add_argument("--out", type=str, default=default(DEFAULT_OUT), help="Output directory")
    parser.add_argument("--seed", type=int, default=default(None), help="Simulation seed")
    parser.add_argument("--format", choices=[f.value for f in OutputFormat], default=default("json"),
                        help="Machine-readable output format")


def create_parser() -> argparse.ArgumentParser:
    """Create command-line argument parser"""
    parser = argparse.ArgumentParser(
        prog="curbflow",
        description="Curbside parking as a network of loss queues",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Interactive mode
  python main.py --cli

  # Arrival rate behind an observed occupancy
  python main.py --cli invert --k 2 --mu 1 --u 0.4

  # Uniform d-regular network
  python main.py --cli uniform --k 1 --mu 1 --lambda 0.5 --degree 4

  # Cruising estimate and congestion pricing for a scenario
  python main.py --cli network estimate scenarios/mission/scenario.json
  python main.py --cli optimize scenarios/mission/scenario.json
  python main.py --cli optimize scenarios/mission/scenario.json --uniform-cap 3
"""
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {TOOL_VERSION}")
    _add_global_flags(parser, suppress=False)

    subparsers = parser.add_subparsers(dest="command", help="Subcommands")

    def scenario_command(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("scenario_path", nargs="?", help="Scenario JSON file (or use --scenario)")
        _add_global_flags(sub, suppress=True)
        return sub

    # invert subcommand
    invert_parser = subparsers.add_parser("invert", help="Arrival rate that sustains an occupancy")
    invert_parser.add_argument("--k", type=int, required=True, help="Stall count")
    invert_parser.add_argument("--mu", type=float, required=True, help="Per-stall service rate (1/hour)")
    invert_parser.add_argument("--u", type=float, required=True, help="Occupancy in [0, 0.999]")
    _add_global_flags(invert_parser, suppress=True)

    # uniform subcommand
    uniform_parser = subparsers.add_parser("uniform", help="Fixed point of a uniform d-regular network")
    uniform_parser.add_argument("--k", type=int, required=True, help="Stall count")
    uniform_parser.add_argument("--mu", type=float, required=True, help="Per-stall service rate (1/hour)")
    uniform_parser.add_argument("--lambda", dest="lam", type=float, required=True, help="Exogenous rate per block")
    uniform_parser.add_argument("--degree", type=int, required=True, help="Out-degree d")
    _add_global_flags(uniform_parser, suppress=True)

    # network subcommand
    network_parser = subparsers.add_parser("network", help="Solve the rejection-circulation network")
    network_sub = network_parser.add_subparsers(dest="network_command", help="Direction")
    for name, help_text in (("solve", "Exogenous demand -> flows"), ("estimate", "Observed occupancy -> flows")):
        sub = network_sub.add_parser(name, help=help_text)
        sub.add_argument("scenario_path", nargs="?", help="Scenario JSON file (or use --scenario)")
        _add_global_flags(sub, suppress=True)

    # optimize subcommand
    optimize_parser = scenario_command("optimize", "Congestion-constrained prices")
    optimize_parser.add_argument("--uniform-cap", type=float, default=None,
                                 help="Same congestion cap (vehicles/hour) for every priced block")

    # simulate subcommand
    simulate_parser = scenario_command("simulate", "Discrete-event simulation")
    simulate_parser.add_argument("--replications", type=int, default=None, help="Independent replications")
    simulate_parser.add_argument("--horizon", type=float, default=None, help="Simulated hours")
    simulate_parser.add_argument("--warmup", type=float, default=None, help="Hours discarded")
    simulate_parser.add_argument("--service", type=str, default=None,
                                 help="exponential | deterministic | lognormal[:cv]")
    simulate_parser.add_argument("--workers", type=int, default=None, help="Worker processes for replications")

    # report subcommand
    report_parser = scenario_command("report", "Every solve the scenario supports")
    report_parser.add_argument("--simulate", action="store_true", help="Include a simulation run")

    # plot subcommand
    plot_parser = scenario_command("plot", "Plot-ready data series")
    plot_parser.add_argument("--kind", choices=[k.value for k in PlotKind], default=PlotKind.ALL.value,
                             help="Series to write")
    plot_parser.add_argument("--svg", action="store_true", help="Also render SVG files")

    return parser


def _scenario_path(args) -> Path:
    path = getattr(args, "scenario_path", None) or args.scenario
    if not path:
        raise InvalidInputError("a scenario file is required (positional or --scenario)")
    return Path(path)


def _write(args, command: str, payload) -> Path:
    target = write_output(payload, Path(args.out), command, OutputFormat(args.format), argv=args.argv)
    print(f"Output: {target}")
    return target


def _print_warnings(warnings: List[str]) -> None:
    if warnings:
        print("Warnings:")
        for warn in warnings:
            print(f"  - {warn}")


def cmd_invert(args) -> int:
    """Handle invert command"""
    result = invert_summary(args.k, args.mu, args.u)
    print(f"y = {result['y']:.6f}")
    if result["dy_du"] is not None:
        print(f"dy/du = {result['dy_du']:.6f}")
        print(f"d2y/du2 = {result['d2y_du2']:.6f}")
    _write(args, "invert", normalize({"command": "invert", "version": TOOL_VERSION, "result": result}))
    return EXIT_OK


def cmd_uniform(args) -> int:
    """Handle uniform command"""
    result = uniform_summary(args.k, args.mu, args.lam, args.degree)
    print(f"y = {result['y']:.6f}")
    print(f"x = {result['x']:.6f}")
    _write(args, "uniform", normalize({"command": "uniform", "version": TOOL_VERSION, "result": result}))
    return EXIT_OK


def _print_flows(report) -> None:
    flows = report.flows
    print(f"Mode: {flows.mode.value}   iterations: {flows.iterations}   residual: {flows.residual:.3e}")
    print("-" * 80)
    header = f"  {'block':<14} {'y':>10} {'u':>8} {'rej out':>10} {'rej in':>10}"
    if flows.mode is SolveMode.ESTIMATE:
        header += f" {'lambda':>10}"
    print(header)
    for node in flows.y:
        line = (f"  {node:<14} {flows.y[node]:>10.4f} {flows.occupancy[node]:>8.4f} "
                f"{flows.rejection_out[node]:>10.4f} {flows.rejection_in[node]:>10.4f}")
        if flows.mode is SolveMode.ESTIMATE:
            line += f" {flows.lambda_inferred[node]:>10.4f}"
        print(line)
    print("-" * 80)
    print(f"Total cruising: {flows.total_rejection:.4f} vehicles/hour")
    for share in report.cruising.values():
        flag = " (model exceeds observation)" if share.out_of_range else ""
        print(f"  {share.block_id}: {100 * share.share:.1f}% of through traffic is searching{flag}")


def cmd_network(args) -> int:
    """Handle network solve / estimate"""
    if args.network_command is None:
        raise InvalidInputError("choose 'network solve' or 'network estimate'")
    mode = SolveMode.FORWARD if args.network_command == "solve" else SolveMode.ESTIMATE
    scenario = load_scenario(_scenario_path(args))
    report = build_report(scenario, f"network_{args.network_command}", mode=mode)
    _print_flows(report)
    _print_warnings(report.warnings)
    _write(args, report.command, report_payload(report))
    return EXIT_OK


def cmd_optimize(args) -> int:
    """Handle optimize command"""
    scenario = load_scenario(_scenario_path(args))
    report = build_report(scenario, "optimize", optimize=True, uniform_cap=args.uniform_cap)
    sol = report.pricing
    print(f"Optimized {len(sol.prices)} block prices ({sol.iterations} iterations, KKT residual {sol.kkt_residual:.2e})")
    print("-" * 80)
    print(f"  {'block':<14} {'price':>8} {'change':>8} {'u before':>9} {'u after':>8} {'rej before':>11} {'rej after':>10}")
    for i, price in sol.prices.items():
        before = report.baseline[i]
        change = "" if before["price"] is None else f"{price - before['price']:+8.2f}"
        u0 = "" if before["occupancy"] is None else f"{before['occupancy']:.4f}"
        g0 = "" if before["rejection"] is None else f"{before['rejection']:.4f}"
        print(f"  {i:<14} {price:>8.2f} {change:>8} {u0:>9} {sol.occupancies[i]:>8.4f} {g0:>11} {sol.rejections[i]:>10.4f}")
    print("-" * 80)
    pricing = report.summary["pricing"]
    print(f"Rejection: {pricing['rejection_before']:.4f} -> {pricing['rejection_after']:.4f} vehicles/hour")
    print(f"Serviced:  {pricing['serviced_before']:.4f} -> {pricing['serviced_after']:.4f} vehicles/hour")
    _print_warnings(report.warnings)
    _write(args, "optimize", report_payload(report))
    return EXIT_OK


def _sim_config(args, scenario) -> SimConfig:
    config = scenario.sim or SimConfig()
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    for name in ("replications", "horizon", "warmup", "workers"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "service", None):
        overrides["service_dist"] = ServiceDist.parse(args.service)
    return replace(config, **overrides) if overrides else config


def _print_simulation(report) -> None:
    sim = report.simulation
    print(f"Simulated {sim.replications} replication(s) from seed {sim.seed}")
    print("-" * 80)
    print(f"  {'block':<14} {'u sim':>8} {'+/-':>8} {'blocking':>9} {'u model':>8}")
    for i, u in sim.occupancy.items():
        model = "" if report.flows is None else f"{report.flows.occupancy[i]:.4f}"
        print(f"  {i:<14} {u:>8.4f} {sim.occupancy_ci[i]:>8.4f} {sim.blocking[i]:>9.4f} {model:>8}")
    print("-" * 80)
    print(f"Drivers: {sim.arrivals} arrived, {sim.parked} parked, {sim.circulating} circulating, "
          f"{sim.hop_capped} gave up, {sim.exited} left at sinks")


def cmd_simulate(args) -> int:
    """Handle simulate command"""
    scenario = load_scenario(_scenario_path(args))
    network = all(b.lam is not None for b in scenario.blocks) or all(b.observed_u is not None for b in scenario.blocks)
    report = build_report(scenario, "simulate", simulate=True, sim_config=_sim_config(args, scenario),
                          network=network)
    _print_simulation(report)
    _print_warnings(report.warnings)
    _write(args, "simulate", report_payload(report))
    return EXIT_OK


def cmd_report(args) -> int:
    """Handle report command"""
    scenario = load_scenario(_scenario_path(args))
    report = build_report(scenario, "report", optimize=bool(scenario.models),
                          simulate=args.simulate, sim_config=_sim_config(args, scenario))
    _print_flows(report)
    if report.simulation is not None:
        _print_simulation(report)
    _print_warnings(report.warnings)
    _write(args, "report", report_payload(report))
    return EXIT_OK


def cmd_plot(args) -> int:
    """Handle plot command"""
    scenario = load_scenario(_scenario_path(args))
    kind = PlotKind(args.kind)
    needs_network = kind is not PlotKind.ARRIVAL_CURVES
    simulate = kind is PlotKind.SIMULATION or (kind is PlotKind.ALL and scenario.sim is not None)
    optimize = kind in (PlotKind.BEFORE_AFTER, PlotKind.ALL) and bool(scenario.models)
    report = build_report(scenario, "plot", optimize=optimize, simulate=simulate,
                          sim_config=_sim_config(args, scenario), network=needs_network)
    written = emit_plot_data(report, kind, Path(args.out), svg=args.svg)
    print(f"Wrote {len(written)} files:")
    for path in written:
        print(f"  {path}")
    return EXIT_OK


COMMANDS = {
    "invert": cmd_invert,
    "uniform": cmd_uniform,
    "network": cmd_network,
    "optimize": cmd_optimize,
    "simulate": cmd_simulate,
    "report": cmd_report,
    "plot": cmd_plot,
}


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    configure_logging()
    parser = create_parser()
    args = parser.parse_args(argv)
    args.argv = list(argv) if argv is not None else sys.argv[1:]

    if args.command is None:
        # No subcommand, enter interactive mode
        return interactive_mode()

    handler = COMMANDS.get(args.command)
    if handler is None:
        parser.print_help()
        return EXIT_VALIDATION
    try:
        return handler(args)
    except CurbflowError as e:
        print(f"Error: {e}", file=sys.stderr)
        return exit_code_for(e)


if __name__ == "__main__":
    sys.exit(main())
