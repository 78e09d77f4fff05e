"""Integration tests — CLI commands and filesystem adapters against tmp_path."""
