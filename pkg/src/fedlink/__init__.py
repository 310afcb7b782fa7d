"""Federated integration engine over synthetic chronic-disease data."""
