"""Tests for surgical-lc."""
