"""Exception types shared across the toolkit."""


class LatentSearchError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(LatentSearchError):
    """Invalid user-supplied configuration or arguments."""


class ShapeError(LatentSearchError):
    """Vector or matrix dimensions do not match the declared layout."""


class DegenerateInputError(LatentSearchError):
    """Input is mathematically degenerate for the requested operation."""


class DegenerateExtentError(DegenerateInputError):
    """All points coincide, so no finite min-max normalization exists."""


class NumericError(LatentSearchError):
    """A numeric computation produced non-finite or invalid results."""


class NumericWarning(UserWarning):
    """A numeric procedure finished off-target but usable."""


class CapabilityError(LatentSearchError):
    """The configured backend cannot perform the requested operation."""


class EvaluationError(LatentSearchError):
    """A generator or encoder backend failed while evaluating a latent."""


class BridgeProtocolError(LatentSearchError):
    """Malformed or unexpected message on the bridge wire protocol."""
