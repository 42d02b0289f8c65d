"""Exception hierarchy shared by all wnls modules."""


class WNLSError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(WNLSError, ValueError):
    """Invalid grid sizes, model exponents or run configuration."""


class UnsupportedDimensionError(ConfigurationError):
    pass


class DomainError(WNLSError, ValueError):
    """Arguments outside the domain of an operation (mismatched grids, bad lambda, ...)."""


class DegenerateInputError(WNLSError, ValueError):
    """The input makes the requested quantity undefined (zero mass, zero gradient)."""


class PreconditionError(WNLSError, ValueError):
    pass


class AliasingError(WNLSError):
    """A rescaled field would leave the box or exceed the grid bandwidth."""


class NoFiberError(WNLSError, ValueError):
    """The fibering map has no interior maximum for this field."""


class UnsupportedProblemError(WNLSError, ValueError):
    pass


class GateError(WNLSError):
    """A diagnostic was requested on data that does not satisfy its certification gate."""


class ConvergenceError(WNLSError):
    """A solver stopped without meeting its tolerances.

    The partially converged result (if any) is attached as ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class CheckpointError(WNLSError):
    """Corrupt, truncated or incompatible checkpoint file."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class MigrationRefusedError(CheckpointError):
    pass
