"""Unit tests — fast, in-memory datasets, no command runs."""
