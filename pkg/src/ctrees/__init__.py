"""Colored trees, C-sets, branching descriptors and their first-order classification."""

__version__ = "0.1.0"
