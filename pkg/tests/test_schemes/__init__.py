"""Tests for time integration schemes."""
