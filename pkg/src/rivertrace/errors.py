"""Exception types shared across the package."""


class RasterIOError(Exception):
    """A raster file could not be read or written."""


class DegenerateInputError(Exception):
    """An operation received input with no usable signal (e.g. an empty or
    constant image where a threshold has to be estimated)."""


class PipelineStageError(Exception):
    """A pipeline stage failed; carries the stage name for error reporting."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
