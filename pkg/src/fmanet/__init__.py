"""Dual-phase optical-flow micro-expression recognition (MM-COF and FMANet)."""

__version__ = "0.1.0"
