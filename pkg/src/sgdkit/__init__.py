"""Schema-guided dialogue toolkit: corpus simulation, state tracking and evaluation."""

from pathlib import Path

__version__ = "0.1.0"

# Bundled services, entity tables, value pools and default configs.
DATA_DIR = Path(__file__).resolve().parent / "data"
