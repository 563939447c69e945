"""Tests for graphonlqr."""
