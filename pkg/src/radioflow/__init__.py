"""Radar-only velocity and obstacle perception with desk-scale simulators."""

__version__ = "0.1.0"
