"""Online sparse dictionary learning with iterative-shrinkage solvers."""

__version__ = "0.1.0"
