"""
Exception hierarchy shared by all packages
"""


class NinjaError(Exception):
    """Base class of every error raised on purpose by this repository"""


class ConfigKeyError(NinjaError, KeyError):
    """A config file lacks a required key or defines an unknown one"""

    def __init__(self, key, expected, reason='missing'):
        self.key = key
        self.expected = list(expected)
        self.reason = reason
        super().__init__(key)

    def __str__(self):
        return (f"{self.reason} config key {self.key!r}; "
                f"expected keys: {', '.join(self.expected)}")


class ConfigValueError(NinjaError, ValueError):
    """A config value is malformed or out of range"""


class CheckpointVersionError(NinjaError):
    """Checkpoint written with an unsupported format version"""


class CheckpointCorruptError(NinjaError):
    """Checkpoint is truncated, has a bad magic or a checksum mismatch"""


class DescriptorDimensionError(NinjaError, ValueError):
    """Descriptor length disagrees with the experiment dimensionality"""


class DescriptorLookupError(NinjaError, KeyError):
    """An (image_id, keypoint_index) pair is absent from a descriptor dump"""


class UnsupportedImageError(NinjaError):
    """Image file is not 8-bit RGB/grayscale"""


class IngestionError(NinjaError):
    """Dataset folder cannot be turned into manifests"""


class EmptyDatasetError(NinjaError, ValueError):
    """A training stage received no samples"""


class ShapeMismatchError(NinjaError, ValueError):
    """Two arrays that must share a shape do not"""


class NonFiniteLossError(NinjaError, FloatingPointError):
    """A training loss became NaN or infinite"""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
