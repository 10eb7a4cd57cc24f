"""Exception types shared across the package."""


class DomainError(ValueError):
    """Invalid argument for an operation (out of range, mismatched sizes, ...)."""


class DegenerateDirectionError(DomainError):
    """Mean spin too short to define a perpendicular plane."""


class ResourceError(RuntimeError):
    """Requested computation exceeds a hard size limit."""
