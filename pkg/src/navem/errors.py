"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Bad run configuration (missing file, malformed option, ...)."""


class GeometryError(ValueError):
    """Degenerate or invalid geometric input (zero area, self-intersection, ...)."""


class GenerationError(RuntimeError):
    """Random polygon sampling exhausted its attempt budget."""


class ContainmentError(RuntimeError):
    """A canonicalized element fell outside the reference square."""


class ModelMismatchError(ValueError):
    """Model incompatible with the request (wrong vertex count, bad file)."""


class TrainingDivergenceError(RuntimeError):
    """Loss became non-finite or exceeded the divergence threshold."""


class SolverError(RuntimeError):
    """Linear system assembly or factorization failed."""
