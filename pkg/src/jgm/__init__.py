"""Joint intensity-gradient score-based colorization."""

__version__ = "0.1.0"
