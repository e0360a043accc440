"""Exception types shared across the library.

Plain ``ValueError`` is used for argument/shape mistakes; the classes here
cover failures that callers are expected to catch and act on.
"""


class DualGradError(Exception):
    """Base class for library-specific failures."""


class DataFormatError(DualGradError):
    """A dataset file does not match its declared format."""


class UpdateRateOverflowError(DualGradError):
    """eta * |grad| exceeded 1 for some neuron, so the convex moving-average
    update is no longer a convex combination.  Raised instead of clamping so
    that divergence is not silently masked."""

    def __init__(self, rate: float, iteration: int | None = None):
        self.rate = rate
        self.iteration = iteration
        where = f" at iteration {iteration}" if iteration is not None else ""
        super().__init__(f"update rate eta*|grad| = {rate:g} exceeds 1{where}")


class DivergenceError(DualGradError):
    """Training produced a non-finite sample loss."""

    def __init__(self, iteration: int, loss: float):
        self.iteration = iteration
        self.loss = loss
        super().__init__(f"non-finite loss ({loss!r}) at iteration {iteration}")
