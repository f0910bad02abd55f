"""Benchmarking count regressors for transit-trip demand, with multiple-comparison tests,
accessibility scenarios and model-agnostic explanations."""

__version__ = "0.1.0"
