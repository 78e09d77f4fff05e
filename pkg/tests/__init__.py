"""Test suite for fuselab."""
