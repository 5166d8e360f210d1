"""Simulation lab for two-choice donation matching and weighted balls-into-bins."""

__version__ = "0.1.0"
