"""Classical-quantum limit of two-particle Schroedinger dynamics."""
__version__ = "0.1.0"
