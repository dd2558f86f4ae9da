"""Extremes of stationary random fields on Z^d."""
from .errors import (DegenerateKernelError, DimensionError, ExtentError, MaxfieldError,
                     NotGenerableError)
from .fields import (FieldSpec, GridRealization, KernelSpec, TailSpec, generate,
                     threshold_v)
from .lattice import OrderSpec, Window, block_sizes, compare, neighborhood_A
from .seeding import seed_substream

__version__ = "0.1.0"

__all__ = [
    "DegenerateKernelError", "DimensionError", "ExtentError", "MaxfieldError",
    "NotGenerableError", "FieldSpec", "GridRealization", "KernelSpec", "TailSpec",
    "generate", "threshold_v", "OrderSpec", "Window", "block_sizes", "compare",
    "neighborhood_A", "seed_substream",
]
