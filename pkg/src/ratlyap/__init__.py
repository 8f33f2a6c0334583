"""Rational Lyapunov functions for homogeneous polynomial vector fields via SDP."""

__version__ = "0.1.0"
