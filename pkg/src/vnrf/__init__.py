"""Variable-neighbourhood random fields: simulation and context-radius estimation."""

__version__ = "0.1.0"
