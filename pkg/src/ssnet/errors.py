"""Exception types shared across the toolkit."""


class SSNetError(Exception):
    """Base class for all toolkit errors."""


class FilterParameterError(SSNetError, ValueError):
    """A filter parameter is invalid for the given image (bad scale, window, ...)."""


class ContractError(SSNetError, ValueError):
    """An operation was called with inputs violating its contract (shape mismatch, ...)."""


class ConfigError(SSNetError, ValueError):
    """A configuration object or serialized config is invalid or incomplete."""


class PhantomGeometryError(SSNetError, RuntimeError):
    """Phantom geometry could not be placed inside the image after bounded retries."""


class TrainingError(SSNetError, RuntimeError):
    """Training aborted (NaN loss, empty dataset, bad checkpoint, ...)."""
