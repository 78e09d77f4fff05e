"""Acceptance tests — numerical oracles and trends on the default synthetic benchmark."""
