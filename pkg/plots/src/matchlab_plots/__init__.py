"""Figure rendering for matchlab experiment CSVs."""

__version__ = "0.1.0"
