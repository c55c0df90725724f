"""Melody-lyrics matching with sylphones and soft-DTW contrastive alignment."""

__version__ = "0.1.0"
