"""Exception types shared across the package.

The CLI maps these onto its exit-code contract: input/data problems exit
with 1, configuration problems with 2.
"""


class SipsegError(Exception):
    """Base class for all package-specific errors."""


class MalformedImageError(SipsegError):
    """File exists but cannot be decoded (bad header, truncated raster)."""


class NonGrayscaleError(SipsegError):
    """Input image is not 8-bit single-channel."""


class LabelValueError(SipsegError):
    """Label map contains a class id outside the supported range."""


class ShapeMismatchError(SipsegError):
    """Two arrays that must share a shape do not."""


class DegenerateImageError(SipsegError):
    """Operation undefined on this input (e.g. constant image)."""


class PupilNotFoundError(SipsegError):
    """No circular contour with a response above the detection floor."""


class MissingClassError(SipsegError):
    """A class required to be present has zero pixels."""


class WeightsFormatError(SipsegError):
    """Weights file is corrupt or inconsistent with the network spec."""


class ConfigError(SipsegError):
    """Invalid configuration file or parameter set."""
