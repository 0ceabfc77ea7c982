"""Exception hierarchy shared by all modules."""


class BirdMotifError(Exception):
    """Base class for every error raised by this package."""


class FormatError(BirdMotifError, ValueError):
    """A file header or container is malformed."""


class UnsupportedFormatError(BirdMotifError, ValueError):
    """A well-formed file uses an encoding we do not decode."""


class EmptyInputError(BirdMotifError, ValueError):
    """Input carries no usable samples or frames."""


class InputError(BirdMotifError, ValueError):
    """Input values are invalid (e.g. non-finite)."""


class ShapeError(BirdMotifError, ValueError):
    """Array shapes or dimensions disagree."""


class SizeError(BirdMotifError, ValueError):
    """Input is too small, or too large for a guarded routine."""


class NoMotifError(BirdMotifError, ValueError):
    """A matrix profile has no finite distance to pick from."""


class DataIntegrityError(BirdMotifError, ValueError):
    """Stored indices point outside the data they describe."""


class InsufficientDiversityError(BirdMotifError, ValueError):
    """Triplets need at least two distinct tracks or species."""
