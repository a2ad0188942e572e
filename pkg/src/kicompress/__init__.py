"""Block decomposition, rate evaluation and variable-length faithful coding of quantum sources."""

__version__ = "0.1.0"
