"""Object search with spatially constrained language queries on a semantic belief map."""

__version__ = "0.1.0"
