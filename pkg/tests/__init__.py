"""Tests for the multi-source calibration engine."""
