"""Exception types shared across the package."""


class PipelineError(ValueError):
    """Raised when an input fails validation anywhere in the pipeline.

    The CLI maps this to exit code 1; anything else that escapes is an
    internal error (exit code 2).
    """
