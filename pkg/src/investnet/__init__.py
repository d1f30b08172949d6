"""Investor social-network features for next-day stock movement prediction."""

__version__ = "0.1.0"
