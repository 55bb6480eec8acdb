"""Simulated MapReduce jobs and reduce-phase progress indicators for skewed workloads."""

__version__ = "0.1.0"
