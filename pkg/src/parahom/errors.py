"""Exception hierarchy shared by all parahom modules."""

from __future__ import annotations


class ParahomError(Exception):
    """Base class for every error raised by parahom."""


class EllipticityViolation(ParahomError):
    """A coefficient (or the homogenized matrix) failed the ellipticity probe."""


class IterationLimitExceeded(ParahomError):
    """The Krylov cell solve did not reach its tolerance within the iteration cap."""


class NonZeroMean(ParahomError):
    """A periodic Poisson right-hand side violates the solvability condition."""


class UnderResolvedKernel(ParahomError):
    """The smoothing kernel covers fewer than four grid cells along some axis."""


class BadLayerWidth(ParahomError):
    """The cutoff layer width delta lies outside the open interval (2 eps, 20 eps)."""


class StepSolveFailure(ParahomError):
    """A time-step linear solve was singular or produced non-finite values."""


class PolicyViolation(ParahomError):
    """The space-time grid does not resolve the oscillation scale eps."""


class WindowTooCoarse(ParahomError):
    """Fewer than two time levels fit inside an eps**2 window."""


class GridMismatch(ParahomError):
    """Fields that must share one grid do not."""


class TestFieldSupportViolation(ParahomError):
    """A test field does not vanish near the parabolic boundary of the domain."""

    __test__ = False  # keep pytest from collecting this class


class BudgetExceeded(ParahomError):
    """A requested grid exceeds the memory budget guard."""


class DegenerateData(ParahomError):
    """Slope fitting was asked to fit values that are (numerically) zero."""


class ConfigError(ParahomError):
    """A study configuration file is missing, malformed, or inconsistent."""
