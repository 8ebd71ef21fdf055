"""Emotional agents on an evolving agent-post network, plus the analysis pipeline."""

__version__ = "0.1.0"
