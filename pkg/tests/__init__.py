"""ZNL pipeline tests."""
