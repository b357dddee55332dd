"""Hamilton-Jacobi equations on multi-dimensional junctions."""

__version__ = "0.1.0"
