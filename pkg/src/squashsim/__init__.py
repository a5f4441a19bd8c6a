"""Discrete-event simulator of speculative loads, MSHR caches and squash-time cancellation."""
__version__ = "0.1.0"
