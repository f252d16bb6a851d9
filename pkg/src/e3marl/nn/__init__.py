"""Equivariant networks and baselines."""
