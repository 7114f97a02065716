"""Unit tests for surgical-lc."""
