"""
gui_mainwindow.py - GUI Main Window

Contains two tabs:
1. Occupancy inversion for a single block-face
2. Scenario network solve, pricing and simulation
"""

import sys
from pathlib import Path
from typing import Optional

from PySide6.QtWidgets import (
    QMainWindow, QWidget, QVBoxLayout, QHBoxLayout, QGridLayout,
    QTabWidget, QLabel, QLineEdit, QPushButton, QCheckBox, QComboBox,
    QSpinBox, QDoubleSpinBox, QTableWidget, QTableWidgetItem, QProgressBar,
    QFileDialog, QMessageBox, QHeaderView, QGroupBox
)
from PySide6.QtCore import Slot
from PySide6.QtGui import QColor

# Ensure the core module can be imported
sys.path.insert(0, str(Path(__file__).parent.parent))

from core import (
    U_CAP,
    CurbflowError,
    OutputFormat,
    QueueParams,
    Report,
    SolveMode,
    arrival_curve,
    invert_summary,
    report_payload,
    write_output,
)
from core.inversion import default_curve_grid
from .gui_workers import ReportWorker


def _cell(value: Optional[float], digits: int = 4) -> QTableWidgetItem:
    return QTableWidgetItem("" if value is None else f"{value:.{digits}f}")


class InversionTab(QWidget):
    """Occupancy -> arrival rate for one block-face"""

    def __init__(self, parent=None):
        super().__init__(parent)
        self._init_ui()

    def _init_ui(self):
        layout = QVBoxLayout(self)

        params_group = QGroupBox("Block-face")
        params_layout = QGridLayout(params_group)

        params_layout.addWidget(QLabel("Stalls k:"), 0, 0)
        self.k_spin = QSpinBox()
        self.k_spin.setRange(1, 500)
        self.k_spin.setValue(10)
        params_layout.addWidget(self.k_spin, 0, 1)

        params_layout.addWidget(QLabel("Service rate mu (1/hour):"), 1, 0)
        self.mu_spin = QDoubleSpinBox()
        self.mu_spin.setDecimals(3)
        self.mu_spin.setRange(0.001, 100.0)
        self.mu_spin.setValue(1.0)
        params_layout.addWidget(self.mu_spin, 1, 1)

        params_layout.addWidget(QLabel("Occupancy u:"), 2, 0)
        self.u_spin = QDoubleSpinBox()
        self.u_spin.setDecimals(3)
        self.u_spin.setRange(0.0, U_CAP)
        self.u_spin.setSingleStep(0.01)
        self.u_spin.setValue(0.85)
        params_layout.addWidget(self.u_spin, 2, 1)

        self.invert_btn = QPushButton("Invert")
        self.invert_btn.clicked.connect(self._do_invert)
        params_layout.addWidget(self.invert_btn, 3, 0, 1, 2)

        layout.addWidget(params_group)

        self.result_label = QLabel("")
        layout.addWidget(self.result_label)

        # Arrival curve over the default occupancy grid
        self.table = QTableWidget()
        self.table.setColumnCount(3)
        self.table.setHorizontalHeaderLabels(["Occupancy", "Arrival rate y", "Per stall y/k"])
        for col in range(3):
            self.table.horizontalHeader().setSectionResizeMode(col, QHeaderView.ResizeMode.Stretch)
        layout.addWidget(self.table, 1)

    def _do_invert(self):
        """Invert the entered occupancy and refresh the curve"""
        k = self.k_spin.value()
        mu = self.mu_spin.value()
        try:
            result = invert_summary(k, mu, self.u_spin.value())
            grid = default_curve_grid()
            ys = arrival_curve(QueueParams(k=k, mu=mu), grid)
        except CurbflowError as e:
            QMessageBox.critical(self, "Error", str(e))
            return

        text = f"y = {result['y']:.6f} /hour    blocking = {result['blocking']:.6f}"
        if result["dy_du"] is not None:
            text += f"    dy/du = {result['dy_du']:.4f}    d2y/du2 = {result['d2y_du2']:.4f}"
        self.result_label.setText(text)

        self.table.setRowCount(len(grid))
        for row, (u, y) in enumerate(zip(grid, ys)):
            self.table.setItem(row, 0, _cell(u, 2))
            self.table.setItem(row, 1, _cell(y))
            self.table.setItem(row, 2, _cell(y / k))


class ScenarioTab(QWidget):
    """Network solve, pricing and simulation for a scenario file"""

    MODES = {"Auto": None, "Forward solve": SolveMode.FORWARD, "Estimate from occupancy": SolveMode.ESTIMATE}

    def __init__(self, parent=None):
        super().__init__(parent)
        self.report: Optional[Report] = None
        self.worker: Optional[ReportWorker] = None

        self._init_ui()

    def _init_ui(self):
        layout = QVBoxLayout(self)

        input_group = QGroupBox("Scenario")
        input_layout = QGridLayout(input_group)

        input_layout.addWidget(QLabel("File:"), 0, 0)
        self.path_edit = QLineEdit()
        self.path_edit.setPlaceholderText("Select scenario.json...")
        input_layout.addWidget(self.path_edit, 0, 1)
        self.browse_btn = QPushButton("Browse...")
        self.browse_btn.clicked.connect(self._browse_file)
        input_layout.addWidget(self.browse_btn, 0, 2)

        input_layout.addWidget(QLabel("Network:"), 1, 0)
        self.mode_combo = QComboBox()
        self.mode_combo.addItems(list(self.MODES))
        input_layout.addWidget(self.mode_combo, 1, 1, 1, 2)

        options_layout = QHBoxLayout()
        self.optimize_check = QCheckBox("Optimize prices")
        self.optimize_check.setChecked(True)
        self.simulate_check = QCheckBox("Simulate")
        options_layout.addWidget(self.optimize_check)
        options_layout.addWidget(self.simulate_check)
        options_layout.addWidget(QLabel("Uniform cap:"))
        self.cap_edit = QLineEdit()
        self.cap_edit.setPlaceholderText("per-block caps")
        options_layout.addWidget(self.cap_edit)
        options_layout.addStretch()
        input_layout.addLayout(options_layout, 2, 0, 1, 3)

        self.run_btn = QPushButton("Run")
        self.run_btn.clicked.connect(self._do_run)
        input_layout.addWidget(self.run_btn, 3, 0, 1, 3)

        layout.addWidget(input_group)

        self.table = QTableWidget()
        self.table.setColumnCount(7)
        self.table.setHorizontalHeaderLabels(
            ["Block", "Occupancy", "Cruising out", "Cruising in", "Price", "Occupancy after", "Simulated"]
        )
        for col in range(7):
            self.table.horizontalHeader().setSectionResizeMode(col, QHeaderView.ResizeMode.Stretch)
        self.table.setSelectionBehavior(QTableWidget.SelectionBehavior.SelectRows)
        layout.addWidget(self.table, 1)

        bottom_layout = QHBoxLayout()
        self.progress_bar = QProgressBar()
        self.progress_bar.setVisible(False)
        bottom_layout.addWidget(self.progress_bar, 1)

        self.save_btn = QPushButton("Save Report...")
        self.save_btn.clicked.connect(self._do_save)
        self.save_btn.setEnabled(False)
        bottom_layout.addWidget(self.save_btn)
        layout.addLayout(bottom_layout)

        self.status_label = QLabel("")
        self.status_label.setWordWrap(True)
        layout.addWidget(self.status_label)

    def _browse_file(self):
        path, _ = QFileDialog.getOpenFileName(self, "Select Scenario", "", "Scenario (*.json)")
        if path:
            self.path_edit.setText(path)

    def _do_run(self):
        path = Path(self.path_edit.text().strip())
        if not path.is_file():
            QMessageBox.warning(self, "Warning", f"File does not exist: {path}")
            return

        cap_text = self.cap_edit.text().strip()
        try:
            uniform_cap = float(cap_text) if cap_text else None
        except ValueError:
            QMessageBox.warning(self, "Warning", f"Uniform cap is not a number: {cap_text}")
            return

        self.run_btn.setEnabled(False)
        self.save_btn.setEnabled(False)
        self.progress_bar.setVisible(True)
        self.progress_bar.setRange(0, 0)  # Indeterminate progress

        self.worker = ReportWorker(
            path,
            mode=self.MODES[self.mode_combo.currentText()],
            optimize=self.optimize_check.isChecked(),
            uniform_cap=uniform_cap,
            simulate=self.simulate_check.isChecked(),
        )
        self.worker.progress.connect(self.status_label.setText)
        self.worker.finished.connect(self._on_finished)
        self.worker.error.connect(self._on_error)
        self.worker.start()

    @Slot(object)
    def _on_finished(self, report: Report):
        self.report = report
        self.run_btn.setEnabled(True)
        self.save_btn.setEnabled(True)
        self.progress_bar.setVisible(False)

        flows = report.flows
        ids = list(flows.y) if flows is not None else list(report.simulation.occupancy)
        self.table.setRowCount(len(ids))
        for row, node in enumerate(ids):
            self.table.setItem(row, 0, QTableWidgetItem(node))
            if flows is not None:
                self.table.setItem(row, 1, _cell(flows.occupancy[node]))
                self.table.setItem(row, 2, _cell(flows.rejection_out[node]))
                self.table.setItem(row, 3, _cell(flows.rejection_in[node]))
            if report.pricing is not None and node in report.pricing.prices:
                self.table.setItem(row, 4, _cell(report.pricing.prices[node], 2))
                after = _cell(report.pricing.occupancies[node])
                if report.pricing.caps.get(node) is not None:
                    after.setForeground(QColor(0, 120, 200))
                self.table.setItem(row, 5, after)
            if report.simulation is not None:
                self.table.setItem(row, 6, _cell(report.simulation.occupancy[node]))

        parts = []
        if flows is not None:
            parts.append(f"Total cruising {flows.total_rejection:.3f} veh/h")
        if report.pricing is not None:
            pricing = report.summary["pricing"]
            parts.append(f"rejection {pricing['rejection_before']:.3f} -> {pricing['rejection_after']:.3f}")
        if report.warnings:
            parts.append(f"{len(report.warnings)} warning(s): " + "; ".join(report.warnings))
        self.status_label.setText("   ".join(parts))

    @Slot(str)
    def _on_error(self, error: str):
        self.run_btn.setEnabled(True)
        self.progress_bar.setVisible(False)
        self.status_label.setText("")
        QMessageBox.critical(self, "Error", error)

    def _do_save(self):
        if self.report is None:
            return
        directory = QFileDialog.getExistingDirectory(self, "Output Directory")
        if not directory:
            return
        target = write_output(report_payload(self.report), Path(directory), "report", OutputFormat.JSON)
        self.status_label.setText(f"Saved {target}")


class MainWindow(QMainWindow):
    """Main window"""

    def __init__(self):
        super().__init__()
        self.setWindowTitle("curbflow")
        self.setMinimumSize(900, 600)

        # Create central widget
        central = QWidget()
        self.setCentralWidget(central)

        layout = QVBoxLayout(central)

        # Create tabs
        self.tabs = QTabWidget()
        self.inversion_tab = InversionTab()
        self.scenario_tab = ScenarioTab()

        self.tabs.addTab(self.inversion_tab, "Single Block")
        self.tabs.addTab(self.scenario_tab, "Scenario")

        layout.addWidget(self.tabs)

        # Status bar
        self.statusBar().showMessage("Ready")
