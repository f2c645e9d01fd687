"""Exception hierarchy shared by every ptysolve module."""


class PtysolveError(Exception):
    """Base class for all errors raised by ptysolve."""


class ShapeError(PtysolveError, ValueError):
    """Array dimensions are empty or inconsistent with each other."""


class BoundsError(PtysolveError, IndexError):
    """A subdomain does not fit inside the field it indexes."""


class ParameterError(PtysolveError, ValueError):
    """A scalar parameter is outside its admissible range."""


class InputError(PtysolveError, ValueError):
    """Measured data is physically invalid (e.g. negative magnitudes)."""


class DegenerateProbeError(PtysolveError, ZeroDivisionError):
    """The probe is identically zero, so the object update is undefined."""


class DegenerateObjectError(PtysolveError, ZeroDivisionError):
    """The object patch is identically zero, so the probe update is undefined."""


class DivergenceError(PtysolveError, FloatingPointError):
    """The reconstruction produced non-finite values."""

    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"non-finite object or probe after epoch {epoch}")


class StackFormatError(PtysolveError):
    """Base for errors raised while loading a persisted diffraction stack."""


class StackVersionError(StackFormatError):
    pass


class StackTruncatedError(StackFormatError):
    pass


class StackConsistencyError(StackFormatError):
    pass


class ConfigError(PtysolveError, ValueError):
    """A run configuration field is missing or invalid.

    ``path`` is the dotted location of the offending field, e.g.
    ``"algorithm.sigma"``.
    """

    def __init__(self, path, reason):
        self.path = path
        self.reason = reason
        super().__init__(f"{path}: {reason}")
