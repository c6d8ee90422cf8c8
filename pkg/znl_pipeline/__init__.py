"""Zero-noise-limit Markov reconstruction of dynamical systems, with Dagster orchestration."""

__version__ = "0.1.0"
