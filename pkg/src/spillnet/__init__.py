"""Granger-causality spillover networks for non-synchronously traded equity markets."""

__version__ = "0.1.0"
