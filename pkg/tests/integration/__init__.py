"""Integration tests for the reconstruction pipeline."""
