"""Tests for ale_fsi."""
