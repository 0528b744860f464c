"""Error taxonomy shared by the whole package.

The CLI maps these onto process exit codes: ConfigError -> 2,
MissingArtifactError -> 3, NumericFault -> 4. Library code raises them
directly so callers can distinguish bad inputs from broken runs.
"""


class XbarError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(XbarError):
    """Invalid run configuration: unknown keys, unphysical constants."""


class MissingArtifactError(XbarError):
    """A required file (dataset, trained model) is absent."""


class NumericFault(XbarError):
    """A computation produced non-finite values."""


class ShapeMismatch(XbarError, ValueError):
    """Input rejected because tensor shapes are inconsistent."""


class NtcFormatError(XbarError, ValueError):
    """Malformed tensor container: bad manifest or blob."""
