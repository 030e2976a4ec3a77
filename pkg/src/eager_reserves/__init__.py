"""Eager second-price auctions with personalized reserve prices."""

__version__ = "0.1.0"
