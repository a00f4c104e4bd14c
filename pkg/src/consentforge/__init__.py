"""Consent-document drafting copilot: protocol parsing, grounded drafting, evaluation."""

__version__ = "0.1.0"
