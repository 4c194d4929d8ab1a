"""Exception types shared across the simulator."""


class ConfigurationError(ValueError):
    """Invalid experiment, model, or CLI configuration."""


class ShapeError(ValueError):
    """Tensor shapes incompatible with the requested operation."""


class DataError(RuntimeError):
    """Dataset could not be generated, ingested, or used."""


class NumericFault(ArithmeticError):
    """Non-finite values appeared during computation."""


class ProtocolError(RuntimeError):
    """Malformed federated update (empty round, shape mismatch, bad counts)."""


class WireFormatError(ValueError):
    """Parameter message bytes failed validation."""
