"""Narrative features from news tone for breakeven inflation direction forecasts."""

__version__ = "0.1.0"
