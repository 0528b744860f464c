"""Crossbar inference benchmark: small-network training, memristive
crossbar mapping with device variability, and hardware cost accounting."""

__version__ = "0.1.0"
