"""Exception taxonomy shared by all panelgls modules."""

from __future__ import annotations


class PanelError(Exception):
    """Base class for all panelgls errors."""


class DimensionError(PanelError):
    """Inputs have incompatible or inadmissible shapes."""


class RankDeficientError(PanelError):
    """A matrix required to have full column rank does not (numerically)."""

    def __init__(self, message: str, unit: int | None = None):
        super().__init__(message)
        self.unit = unit


class SingularError(PanelError):
    """A linear solve failed or a condition estimate exceeded tolerance."""


class SingularWeightError(PanelError):
    """A GLS weight matrix is numerically singular.

    Typically signals too few cross-sectional units relative to the
    number of time periods for the sample weight to have full rank.
    """

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class BandwidthError(PanelError):
    """HAC bandwidth out of admissible range."""


class ParseError(PanelError):
    """Malformed CSV or config content."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UnbalancedPanelError(PanelError):
    """The unit/time grid of a long-format panel file is incomplete."""


class CommonRegressorMismatchError(PanelError):
    """Common-regressor columns differ across units in a panel file."""


class PanelIOError(PanelError):
    """Failed to read or write a data file."""
