"""Forecast-driven hierarchical factor model."""
