"""
Error hierarchy for the shortpulse SDK.

Every failure raised by the library derives from :class:`ShortPulseError` so
callers (notably the scenario runner) can record it without catching
unrelated exceptions.
"""

from __future__ import annotations

from typing import Any, Optional


class ShortPulseError(Exception):
    """Base class for all shortpulse errors."""


class InvalidGrid(ShortPulseError, ValueError):
    """Raised for a grid with odd/too small sample count or bad length."""


class MeanNotZero(ShortPulseError, ValueError):
    """A field handed to an anti-derivative based operator has nonzero mean.

    Attributes:
        which: Label of the anti-derivative that failed (e.g. ``"A"``).
        mean: The offending zero-mode coefficient magnitude.
        tolerance: The admissible magnitude at the time of the check.
    """

    def __init__(self, which: str, mean: float, tolerance: float):
        self.which = which
        self.mean = mean
        self.tolerance = tolerance
        super().__init__(
            f"anti-derivative of {which!r} needs a zero-mean field: "
            f"|f(k=0)| = {mean:.3e} > {tolerance:.3e}"
        )


class StepUnstable(ShortPulseError):
    """The short-pulse integrator left its stability region."""

    def __init__(self, message: str, tau: float):
        self.tau = tau
        super().__init__(f"{message} (tau={tau:.6g})")


class QuadratureUnderResolved(ShortPulseError):
    """Halving the Duhamel sample spacing changed the result too much."""

    def __init__(self, relative_change: float, tolerance: float):
        self.relative_change = relative_change
        super().__init__(
            f"Duhamel quadrature under-resolved: relative change "
            f"{relative_change:.3e} > {tolerance:.3e}"
        )


class BoundaryLeak(ShortPulseError, ValueError):
    """Initial data do not decay to the box boundary."""

    def __init__(self, ratio: float, tolerance: float):
        self.ratio = ratio
        super().__init__(
            f"boundary value is {ratio:.3e} of the peak (limit {tolerance:.0e}); "
            f"enlarge the box or shrink the width"
        )


class ValidityRegionExceeded(ShortPulseError):
    """The Klein-Gordon solution left the region ``|u| < 1/sqrt(3)``.

    Attributes:
        t: Original time at which the monitor fired.
        reason: Which condition failed.
        trajectory: Samples computed before the abort (may be empty).
    """

    def __init__(self, reason: str, t: float, trajectory: Optional[list] = None):
        self.reason = reason
        self.t = t
        self.trajectory = trajectory if trajectory is not None else []
        super().__init__(f"{reason} at t={t:.6g}")


class GridMismatch(ShortPulseError, ValueError):
    """Two fields or grids that must be commensurate are not."""


class SyncError(ShortPulseError, ValueError):
    """Klein-Gordon and short-pulse samples are not at the same tau."""


class Bound7Violated(ShortPulseError):
    """Paired initial data are further than epsilon from the short-pulse data."""

    def __init__(self, value: float, epsilon: float):
        self.value = value
        self.epsilon = epsilon
        super().__init__(
            f"initial-data distance {value:.6g} exceeds epsilon={epsilon:.6g}"
        )


class FitFailed(ShortPulseError):
    """A fit could not be carried out on the given series."""


class ConfigInvalid(ShortPulseError, ValueError):
    """A scenario configuration entry is missing, unknown or out of range."""

    def __init__(self, key: str, reason: str, value: Any = None):
        self.key = key
        self.reason = reason
        self.value = value
        super().__init__(f"{key}: {reason}")


class ReportWriteError(ShortPulseError, OSError):
    """Report files could not be written."""
