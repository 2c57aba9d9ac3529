"""Utilities shared across test suites."""
