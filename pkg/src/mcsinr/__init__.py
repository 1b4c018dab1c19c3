"""Multi-channel SINR network simulator with distributed aggregation and coloring protocols."""

__version__ = "0.1.0"
