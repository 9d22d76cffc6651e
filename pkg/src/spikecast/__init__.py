"""Commodity price-spike forecasting from prices and verified news summaries."""

__version__ = "0.1.0"
