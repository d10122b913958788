"""Stochastic unitary-and-measurement-channel noise models for pure-state simulation."""

__version__ = "0.1.0"
