"""Exact and entropic transport, small numpy networks and W1-estimation experiments."""

__version__ = "0.1.0"
