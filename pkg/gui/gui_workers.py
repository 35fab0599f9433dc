"""
gui_workers.py - GUI Worker Threads

Network solves, pricing and simulation run off the UI thread
"""

import sys
from pathlib import Path
from typing import Optional

from PySide6.QtCore import QThread, Signal, QObject

# Ensure the core module can be imported
sys.path.insert(0, str(Path(__file__).parent.parent))

from core import (
    CurbflowError,
    SimConfig,
    SolveMode,
    build_report,
    load_scenario,
)


class ReportWorker(QThread):
    """Load a scenario and run the requested solves"""

    # Signals
    progress = Signal(str)          # Progress message
    finished = Signal(object)       # Report
    error = Signal(str)             # Error message

    def __init__(
        self,
        scenario_path: Path,
        mode: Optional[SolveMode] = None,
        optimize: bool = False,
        uniform_cap: Optional[float] = None,
        simulate: bool = False,
        sim_config: Optional[SimConfig] = None,
        parent: Optional[QObject] = None
    ):
        super().__init__(parent)
        self.scenario_path = scenario_path
        self.mode = mode
        self.optimize = optimize
        self.uniform_cap = uniform_cap
        self.simulate = simulate
        self.sim_config = sim_config

    def run(self):
        try:
            self.progress.emit(f"Loading {self.scenario_path.name}...")
            scenario = load_scenario(self.scenario_path)

            if self.simulate:
                self.progress.emit("Solving and simulating...")
            elif self.optimize:
                self.progress.emit("Solving network and optimizing prices...")
            else:
                self.progress.emit("Solving network...")

            report = build_report(
                scenario,
                "gui",
                mode=self.mode,
                optimize=self.optimize and bool(scenario.models),
                uniform_cap=self.uniform_cap,
                simulate=self.simulate,
                sim_config=self.sim_config,
            )
            self.finished.emit(report)
        except CurbflowError as e:
            self.error.emit(str(e))
        except Exception as e:
            self.error.emit(f"{type(e).__name__}: {e}")
