"""Exception types shared across the package."""


class BatchLabError(Exception):
    """Base class for all package errors."""


class ConfigError(BatchLabError):
    """Invalid configuration: bad layer stack, bad hyperparameters, bad files."""


class NumericOverflowError(BatchLabError):
    """Non-finite values appeared during a forward pass."""

    def __init__(self, layer_index, message=None):
        self.layer_index = layer_index
        super().__init__(message or f"non-finite activations at layer {layer_index}")


class StaleCacheError(BatchLabError):
    """backward() called with a cache that does not match the last forward()."""


class DegenerateBatchError(BatchLabError):
    """Batch statistics requested on a batch too small to define them."""


class PartitionError(BatchLabError):
    """Global batch not divisible by the worker count."""


class ConsistencyError(BatchLabError):
    """Worker replicas diverged where they must be bitwise-identical."""


class ProtocolError(BatchLabError):
    """Shape mismatch between gradient sets in a collective."""


class ScheduleExhaustedError(BatchLabError):
    """Learning-rate schedule queried past its final iteration."""


class DivergenceError(BatchLabError):
    """Parameters became non-finite during an update."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"non-finite update at iteration {iteration}")


class FormatError(BatchLabError):
    """Malformed binary dataset file."""
