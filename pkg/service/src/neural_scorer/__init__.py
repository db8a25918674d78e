"""Sidecar scoring service: /embed and /bertscore over pluggable encoders."""

__version__ = "0.1.0"
