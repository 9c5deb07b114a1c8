"""Exception types shared across the package."""


class CondnetError(Exception):
    """Base class for all computation failures raised by this package."""


class PlacementFailure(CondnetError):
    """Sequential placement could not fit an inclusion within max_attempts."""


class RelaxationFailure(CondnetError):
    """Repulsive relaxation left residual overlaps after the iteration cap."""


class SingularSystem(CondnetError):
    """Numerical breakdown while solving the circuit system."""


class SizeMismatch(CondnetError):
    """Raw voxel stream length disagrees with the declared dimensions."""


class BadSlice(CondnetError):
    """A slice image is unreadable or inconsistent with the rest of the stack."""


class InsufficientData(CondnetError):
    """A calibration fit was requested for a contact kind with no data points."""


class DegenerateFit(CondnetError):
    """All overlap measures for a contact kind are zero; the fit is undefined."""


class ConfigError(CondnetError):
    """Invalid or inconsistent run configuration."""


class FormatError(CondnetError):
    """A structured-text input file does not follow its documented format."""
