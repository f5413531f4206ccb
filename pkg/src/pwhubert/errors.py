"""Exception types shared across the package."""


class FormatError(ValueError):
    """A binary or text artifact is malformed."""


class BadMagic(FormatError):
    """The file does not start with the expected magic bytes."""


class Truncated(FormatError):
    """The file ends before its declared payload does."""


class DimOverflow(FormatError):
    """A dimension does not fit the on-disk unsigned 32-bit header field."""


class EmptyMaskError(ValueError):
    """No masked frame carries a usable (non-ignore) target."""


class ZeroVarianceError(ValueError):
    """Rank correlation is undefined when one sequence is constant."""
