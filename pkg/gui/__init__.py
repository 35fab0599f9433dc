"""
gui - curbflow GUI
"""

from .gui_entry import main
from .gui_mainwindow import MainWindow

__all__ = ["main", "MainWindow"]
