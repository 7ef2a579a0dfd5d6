"""Two-product inventory policies under stockout-based one-way substitution."""

__version__ = "0.1.0"
