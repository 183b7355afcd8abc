"""Error types shared across the package."""

from __future__ import annotations


class DriftLabError(Exception):
    """Base class for all driftlab errors."""


class DomainError(DriftLabError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class SingularityError(DomainError):
    """A pointwise evaluation was requested exactly at a non-removable singularity."""


class DegenerateDataError(DomainError):
    """Input data is degenerate (e.g. vanishing sup norm where a ratio is needed)."""


class NonConvergenceError(DriftLabError):
    """A quadrature or tail integral does not converge for the supplied inputs."""


class InadmissibleExponentError(DomainError):
    """An exponent combination violates the admissibility condition of a bound."""


class CflError(DriftLabError):
    """Explicit sub-step violates its stability bound.

    Carries the largest admissible step so callers can retry.
    """

    def __init__(self, dt: float, required_dt: float):
        self.dt = dt
        self.required_dt = required_dt
        super().__init__(
            f"time step dt={dt:g} violates the explicit stability bound; "
            f"use dt <= {required_dt:g}"
        )


class DivergenceError(DriftLabError):
    """The discrete state became non-finite during time stepping."""

    def __init__(self, step: int, time: float):
        self.step = step
        self.time = time
        super().__init__(f"non-finite state at step {step} (t={time:g})")


class ResolutionError(DriftLabError, ValueError):
    """A smoothed point source is too narrow for the grid to resolve."""


class SetupError(DriftLabError, ValueError):
    """Inconsistent problem setup (boundary data, grid symmetry, ...)."""


class ExtrapolationError(DriftLabError, ValueError):
    """A query point fell outside the invertible image of the flow."""


class ConfigError(DriftLabError, ValueError):
    """A configuration document failed validation; message names the key."""
