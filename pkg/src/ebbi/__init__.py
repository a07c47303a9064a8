"""Bianchi I Einstein-Boltzmann system with Israel particles and Lambda > 0."""

__version__ = "0.1.0"
