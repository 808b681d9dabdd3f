"""Dynamic substructuring with state-space models built from modal parameters."""

__version__ = "0.1.0"
