"""Federated fine-tuning with parallel one-rank adapters, at desk scale."""

__version__ = "0.1.0"
