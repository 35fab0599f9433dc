"""
cli_interactive.py - Interactive CLI

Provides a menu-style interface over the same operations as the subcommands
"""

import sys
from pathlib import Path
from typing import Optional, List

# Import core module
sys.path.insert(0, str(Path(__file__).parent.parent))

from core import (
    CurbflowError,
    InvalidInputError,
    SolveMode,
    build_report,
    invert_summary,
    load_scenario,
    uniform_summary,
)


def clear_screen():
    """Clear screen"""
    import os
    os.system('cls' if os.name == 'nt' else 'clear')


def print_header(title: str):
    """Print header"""
    print()
    print("=" * 60)
    print(f"  {title}")
    print("=" * 60)
    print()


def input_scenario(prompt: str = "Scenario file") -> Optional[Path]:
    """Input an existing scenario path"""
    while True:
        path_str = input(f"{prompt} (q to return): ").strip()
        if path_str.lower() == 'q':
            return None

        path = Path(path_str).expanduser().resolve()
        if path.is_file():
            return path
        print(f"Error: File does not exist: {path}")


def input_choice(prompt: str, choices: List[str], default: Optional[str] = None) -> Optional[str]:
    """Input choice"""
    choices_str = "/".join(choices)
    default_str = f" [{default}]" if default else ""

    while True:
        value = input(f"{prompt} ({choices_str}){default_str}: ").strip()
        if not value and default:
            return default
        if value.lower() == 'q':
            return None
        if value in choices:
            return value
        print(f"Invalid choice, please enter: {choices_str}")


def input_int(prompt: str, default: int = 1, min_val: int = 1) -> int:
    """Input integer"""
    while True:
        value = input(f"{prompt} [{default}]: ").strip()
        if not value:
            return default
        try:
            num = int(value)
            if num < min_val:
                print(f"Value cannot be less than {min_val}")
                continue
            return num
        except ValueError:
            print("Please enter a valid integer")


def input_float(prompt: str, default: Optional[float] = None) -> Optional[float]:
    """Input a float; empty keeps the default"""
    default_str = f" [{default}]" if default is not None else ""
    while True:
        value = input(f"{prompt}{default_str}: ").strip()
        if not value:
            return default
        try:
            return float(value)
        except ValueError:
            print("Please enter a number")


def menu_invert():
    """Occupancy -> arrival rate"""
    print_header("Invert Occupancy")

    k = input_int("Stalls k", default=10)
    mu = input_float("Service rate mu (1/hour)", default=1.0)
    u = input_float("Occupancy u", default=0.85)

    try:
        result = invert_summary(k, mu, u)
    except CurbflowError as e:
        print(f"Error: {e}")
    else:
        print()
        print(f"  Total arrival rate y = {result['y']:.6f} /hour")
        print(f"  Blocking probability = {result['blocking']:.6f}")
        if result["dy_du"] is not None:
            print(f"  dy/du                = {result['dy_du']:.6f}")
            print(f"  d2y/du2              = {result['d2y_du2']:.6f}")
    print()
    input("Press Enter to return...")


def menu_uniform():
    """Uniform d-regular network"""
    print_header("Uniform Network")

    k = input_int("Stalls per block k", default=1)
    mu = input_float("Service rate mu (1/hour)", default=1.0)
    lam = input_float("Exogenous rate per block lambda", default=0.5)
    degree = input_int("Out-degree d", default=4)

    try:
        result = uniform_summary(k, mu, lam, degree)
    except CurbflowError as e:
        print(f"Error: {e}")
    else:
        print()
        print(f"  Total arrival rate y      = {result['y']:.6f}")
        print(f"  Rejection to each neighbor = {result['x']:.6f}")
        print(f"  Blocking probability       = {result['blocking']:.6f}")
    print()
    input("Press Enter to return...")


def menu_scenario():
    """Network solve and pricing for a scenario file"""
    print_header("Scenario")

    path = input_scenario()
    if path is None:
        return

    mode_choice = input_choice("Network solve (auto/solve/estimate)", ["auto", "solve", "estimate"], default="auto")
    if mode_choice is None:
        return
    mode = {"auto": None, "solve": SolveMode.FORWARD, "estimate": SolveMode.ESTIMATE}[mode_choice]

    try:
        scenario = load_scenario(path)
        optimize = False
        if scenario.models:
            optimize = input_choice("Optimize prices", ["y", "n"], default="y") == "y"
        uniform_cap = input_float("Uniform cap (empty for per-block caps)") if optimize else None
        report = build_report(scenario, "interactive", mode=mode, optimize=optimize, uniform_cap=uniform_cap)
    except CurbflowError as e:
        print(f"Error: {e}")
        input("Press Enter to return...")
        return

    flows = report.flows
    print()
    print(f"Network ({flows.mode.value}), {flows.iterations} iterations")
    print("-" * 60)
    for node in flows.y:
        print(f"  {node:<16} u = {flows.occupancy[node]:.4f}   cruising out = {flows.rejection_out[node]:.4f}")
    print("-" * 60)
    print(f"Total cruising: {flows.total_rejection:.4f} vehicles/hour")
    for share in report.cruising.values():
        print(f"  {share.block_id}: {100 * share.share:.1f}% of through traffic is searching")

    if report.pricing is not None:
        print()
        print("Prices")
        print("-" * 60)
        for i, price in report.pricing.prices.items():
            print(f"  {i:<16} {price:>8.2f}   u = {report.pricing.occupancies[i]:.4f}")
        pricing = report.summary["pricing"]
        print("-" * 60)
        print(f"Rejection {pricing['rejection_before']:.4f} -> {pricing['rejection_after']:.4f}")

    for warn in report.warnings:
        print(f"Warning: {warn}")
    print()
    input("Press Enter to return...")


def interactive_mode() -> int:
    """Interactive mode main loop"""
    while True:
        clear_screen()
        print_header("curbflow")

        print("Please select function:")
        print()
        print("  1. Occupancy -> arrival rate")
        print("  2. Uniform network")
        print("  3. Scenario (network solve and pricing)")
        print()
        print("  q. Exit")
        print()

        choice = input("Please select (1/2/3/q): ").strip().lower()

        try:
            if choice == 'q':
                print("Goodbye!")
                return 0
            elif choice == '1':
                menu_invert()
            elif choice == '2':
                menu_uniform()
            elif choice == '3':
                menu_scenario()
            else:
                print("Invalid choice")
                input("Press Enter to continue...")
        except InvalidInputError as e:
            print(f"Error: {e}")
            input("Press Enter to continue...")


if __name__ == "__main__":
    sys.exit(interactive_mode())
