"""Filesystem adapters — result tables, model checkpoints, atomic output staging."""
