"""
cli - Command Line Interface for curbflow
"""

from .cli_entry import main, create_parser
from .cli_interactive import interactive_mode

__all__ = ["main", "create_parser", "interactive_mode"]
