"""Integration tests for surgical-lc."""
