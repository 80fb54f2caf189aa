"""Exception hierarchy shared by the package."""


class PolyadsError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(PolyadsError, ValueError):
    pass


class NegativeCountError(PolyadsError, ValueError):
    pass


class MissingCovariateError(PolyadsError, KeyError):
    """Raised when a covariate provider cannot supply a requested edge.

    ``missing`` holds every offending edge index that was detected, not just
    the first one, so callers can report the full extent of the problem.
    """

    def __init__(self, missing, message=None):
        self.missing = [tuple(int(v) for v in m) for m in missing]
        if message is None:
            shown = ", ".join(str(m) for m in self.missing[:10])
            more = "" if len(self.missing) <= 10 else f" (+{len(self.missing) - 10} more)"
            message = f"covariates missing for {len(self.missing)} edge(s): {shown}{more}"
        super().__init__(message)

    def __str__(self):
        return self.args[0]


class InvalidParameterError(PolyadsError, ValueError):
    pass


class CollinearityError(PolyadsError, ValueError):
    """The DiD features do not span R^p, so the loss is not strictly convex."""

    def __init__(self, message, null_direction=None):
        super().__init__(message)
        self.null_direction = null_direction


class ResourceGuardError(PolyadsError, MemoryError):
    pass


class CalibrationError(PolyadsError, RuntimeError):
    pass


class SubsampleError(PolyadsError, ValueError):
    pass
