"""Deterministic federated-averaging simulator over a from-scratch CNN.

The pieces: `nn` (hand-backpropagated network), `data` (synthetic textures,
folder ingestion, augmentation, partitioning), `federation` (local SGD plus
weighted averaging rounds), `wire` (binary parameter messages), `experiments`
(centralized and federated runs, sweeps, CSV metrics), `cli` (front end).
"""

from . import data, experiments, federation, nn, wire
from .errors import (
    ConfigurationError,
    DataError,
    NumericFault,
    ProtocolError,
    ShapeError,
    WireFormatError,
)

__version__ = "0.1.0"

__all__ = [
    "data", "experiments", "federation", "nn", "wire",
    "ConfigurationError", "DataError", "NumericFault",
    "ProtocolError", "ShapeError", "WireFormatError",
    "__version__",
]
