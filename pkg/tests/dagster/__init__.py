"""
Dagster Pipeline Tests

This package contains Dagster-specific tests for the reconstruction pipeline:
- Asset materialization tests
- Resource tests
- Ledger skip and metadata tests
"""
