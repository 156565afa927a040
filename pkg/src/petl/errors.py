"""Exception types raised across the package."""


class PetlError(Exception):
    """Base class for all package errors."""


class DimensionError(PetlError, ValueError):
    """An array does not have the shape an operation needs.

    ``axis`` names the offending axis (e.g. ``"H"`` or ``"Cin"``) when known.
    """

    def __init__(self, message, axis=None):
        super().__init__(message)
        self.axis = axis


class NonFiniteGradientError(PetlError, FloatingPointError):
    def __init__(self, name):
        super().__init__(f"non-finite gradient in parameter {name!r}; step rejected")
        self.name = name


class LandmarkBoundsError(PetlError, ValueError):
    def __init__(self, index, point, width, height):
        super().__init__(
            f"landmark {index} at ({point[0]:.2f}, {point[1]:.2f}) lies more than "
            f"2 px outside the {width}x{height} crop"
        )
        self.index = index


class CheckpointError(PetlError):
    """Base class for checkpoint load failures."""


class BadMagicError(CheckpointError):
    pass


class HeaderCorruptError(CheckpointError):
    pass


class PayloadLengthError(CheckpointError):
    pass


class CheckpointShapeError(CheckpointError):
    """A stored tensor does not fit the network; ``None`` marks a tensor missing on one side."""

    def __init__(self, name, expected, found):
        def fmt(s):
            return "no such tensor" if s is None else f"shape {tuple(s)}"
        super().__init__(f"tensor {name!r}: network expects {fmt(expected)}, file has {fmt(found)}")
        self.name = name
        self.expected = expected
        self.found = found


class ManifestError(PetlError, ValueError):
    """Malformed manifest content; ``line`` is 1-based."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FieldCountError(ManifestError):
    pass


class VocabularyError(ManifestError):
    pass


class MissingFileError(ManifestError, FileNotFoundError):
    pass


class ImageFormatError(PetlError, ValueError):
    pass


class MissingLandmarksError(PetlError, ValueError):
    def __init__(self, sample_ids):
        super().__init__("samples without landmarks: " + ", ".join(map(str, sample_ids)))
        self.sample_ids = list(sample_ids)


class ConfigError(PetlError, ValueError):
    """Malformed ``key = value`` configuration; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
