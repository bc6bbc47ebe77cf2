"""Stable-throughput band allocation for buffered cognitive radio networks."""

__version__ = "0.1.0"
