"""Simulation laboratory and exact oracles for boundary-driven KMP energy
models, the associated opinion (averaging) process, the disagreement edge
process and the discrete KMP."""

__version__ = "0.1.0"
