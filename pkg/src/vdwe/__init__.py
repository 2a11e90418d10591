"""Van der Waals compressible Euler flows near vacuum: state law, symmetrized system, solver and diagnostics."""

__version__ = "0.1.0"
