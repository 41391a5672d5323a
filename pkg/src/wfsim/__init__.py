"""Wright-Fisher kernels, their moment duals, non-linear chains and mean-field limits."""

__version__ = "0.1.0"
