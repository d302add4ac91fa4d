"""State estimation and entanglement certification for multi-qubit count data."""

__version__ = "0.1.0"
