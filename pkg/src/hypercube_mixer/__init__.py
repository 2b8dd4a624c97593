"""Constrained hypercube mixer circuits: synthesis, simulation and gate-count analysis."""
