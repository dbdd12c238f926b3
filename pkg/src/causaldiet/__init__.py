"""Personal causal graphs for glucose-aware food recommendation."""

__version__ = "0.1.0"
