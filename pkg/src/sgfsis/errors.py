"""Exception types shared across the package."""


class SgfsisError(Exception):
    """Base class for all package errors."""


class DimensionError(SgfsisError):
    """Array shapes or channel counts do not line up."""


class EmptyMaskError(SgfsisError):
    """A pooling mask sums to zero."""


class DegeneratePrototypeError(SgfsisError):
    """A prototype vector has zero norm."""


class MissingClassError(SgfsisError):
    """A class is absent from every support item."""


class RegistryError(SgfsisError):
    """Duplicate or unknown class names in a prototype registry."""


class MalformedLabelError(SgfsisError):
    """An instance label map violates its invariants."""


class InconsistentMarkerError(SgfsisError):
    """A watershed marker lies outside the binarized foreground."""


class InsufficientDataError(SgfsisError):
    """Pool too small for the requested episode."""


class UnsupportedGraphError(SgfsisError):
    """Gradient requested for a forward graph we do not differentiate."""


class ConfigError(SgfsisError):
    """Bad key or value in a run configuration."""
