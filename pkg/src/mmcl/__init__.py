"""Multimodal continual learning: synthetic audio-visual streams, SAMM and replay baselines."""

__version__ = "0.1.0"
