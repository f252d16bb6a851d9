"""Symmetry verification and invariancy measurement."""
