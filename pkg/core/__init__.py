"""
core - Curbside Parking Network Core Module

Loss-queue model of block-faces, occupancy inversion, network solves,
congestion-constrained pricing, simulation and scenario/report I/O.
"""

import logging
import os
import sys

from .errors import (
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_VALIDATION,
    ConvergenceError,
    CurbflowError,
    InfeasibleCapError,
    InstabilityError,
    InvalidInputError,
    NumericError,
    ReportError,
    ScenarioError,
    SimulationOverloadError,
    exit_code_for,
)

from .models_net import (
    U_CAP,
    BlockFace,
    CruisingShare,
    Edge,
    ElasticityModel,
    GraphReport,
    IssueKind,
    LossProfile,
    NetworkFlows,
    ObjectiveWeighting,
    OccupancyTarget,
    PricedBlock,
    PricingProblem,
    PricingSolution,
    QueueParams,
    SolveMode,
    SolverOptions,
    StreetGraph,
    UniformSolution,
)

from .loss_queue import (
    stationary_distribution,
    erlang_blocking,
    occupancy,
    occupancy_slope,
    carried_fraction,
    carried_load,
)

from .inversion import (
    invert_occupancy,
    arrival_sensitivity,
    arrival_curvature,
    convexity_margin,
    implicit_bound_gap,
    occupancy_poly_coeffs,
    uniform_poly_coeffs,
    sign_changes,
    solve_uniform,
    arrival_curve,
)

from .graph_checks import validate_graph

from .network import (
    routing_matrix,
    forward_solve,
    estimate_from_occupancy,
    cruising_share,
    cruising_shares,
)

from .pricing import (
    ConvexityReport,
    occupancy_of_price,
    price_for_occupancy,
    rejection_of_price,
    congestion_price_floor,
    optimize_prices,
    verify_convexity,
    calibrate_alpha,
    anchored_model,
    relative_caps,
)

from .simulate import (
    ServiceDist,
    ServiceKind,
    SimConfig,
    SimResult,
    run,
    replicate,
)

from .scenario_io import (
    Scenario,
    load_scenario,
    parse_scenario,
    write_scenario,
    scenario_hash,
)

from .report import (
    TOOL_VERSION,
    OutputFormat,
    PlotKind,
    Report,
    build_report,
    emit_plot_data,
    invert_summary,
    report_payload,
    solve_network,
    uniform_summary,
    write_output,
)

__version__ = TOOL_VERSION

LOG_ENV = "CURBFLOW_LOG"
LOG_FORMAT = "%(asctime)s [%(name)s %(levelname)s] %(message)s"


def configure_logging(level: str = None) -> int:
    """
    Send library logs to stderr

    Args:
        level: Level name; defaults to $CURBFLOW_LOG, then WARNING

    Returns:
        The numeric level applied
    """
    name = (level or os.environ.get(LOG_ENV) or "WARNING").upper()
    numeric = logging.getLevelName(name)
    if not isinstance(numeric, int):
        numeric = logging.WARNING
    root = logging.getLogger("core")
    root.setLevel(numeric)
    # the previous stderr may already be closed, so never flush it
    for stale in [h for h in root.handlers if getattr(h, "_curbflow", False)]:
        root.removeHandler(stale)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._curbflow = True
    root.addHandler(handler)
    return numeric


__all__ = [
    "TOOL_VERSION",
    # Errors
    "EXIT_OK",
    "EXIT_VALIDATION",
    "EXIT_NUMERIC",
    "CurbflowError",
    "InvalidInputError",
    "ScenarioError",
    "ReportError",
    "NumericError",
    "InstabilityError",
    "ConvergenceError",
    "InfeasibleCapError",
    "SimulationOverloadError",
    "exit_code_for",

    # Data models
    "U_CAP",
    "QueueParams",
    "LossProfile",
    "OccupancyTarget",
    "UniformSolution",
    "BlockFace",
    "Edge",
    "StreetGraph",
    "IssueKind",
    "GraphReport",
    "SolverOptions",
    "SolveMode",
    "NetworkFlows",
    "CruisingShare",
    "ElasticityModel",
    "ObjectiveWeighting",
    "PricedBlock",
    "PricingProblem",
    "PricingSolution",

    # Loss queue
    "stationary_distribution",
    "erlang_blocking",
    "occupancy",
    "occupancy_slope",
    "carried_fraction",
    "carried_load",

    # Inversion
    "invert_occupancy",
    "arrival_sensitivity",
    "arrival_curvature",
    "convexity_margin",
    "implicit_bound_gap",
    "occupancy_poly_coeffs",
    "uniform_poly_coeffs",
    "sign_changes",
    "solve_uniform",
    "arrival_curve",

    # Network
    "validate_graph",
    "routing_matrix",
    "forward_solve",
    "estimate_from_occupancy",
    "cruising_share",
    "cruising_shares",

    # Pricing
    "ConvexityReport",
    "occupancy_of_price",
    "price_for_occupancy",
    "rejection_of_price",
    "congestion_price_floor",
    "optimize_prices",
    "verify_convexity",
    "calibrate_alpha",
    "anchored_model",
    "relative_caps",

    # Simulation
    "ServiceDist",
    "ServiceKind",
    "SimConfig",
    "SimResult",
    "run",
    "replicate",

    # Scenario and report I/O
    "Scenario",
    "load_scenario",
    "parse_scenario",
    "write_scenario",
    "scenario_hash",
    "OutputFormat",
    "PlotKind",
    "Report",
    "build_report",
    "solve_network",
    "emit_plot_data",
    "invert_summary",
    "uniform_summary",
    "report_payload",
    "write_output",

    "configure_logging",
]
