"""Random walks on groups acting by isometries, and numerical checks of their laws of large numbers."""

__version__ = "0.1.0"
