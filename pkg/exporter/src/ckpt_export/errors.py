"""Exception hierarchy for checkpoint export failures."""


class ExportError(Exception):
    """Base class: the checkpoint could not be exported."""


class MissingCheckpointError(ExportError):
    """The input checkpoint file does not exist."""


class CheckpointFormatError(ExportError):
    """The checkpoint file is not a readable parameter dictionary."""


class ShapeMismatchError(ExportError):
    """A checkpoint parameter's shape contradicts the declared architecture."""


class UnmatchedParameterError(ExportError):
    """Checkpoint parameters exist that the architecture cannot absorb."""
