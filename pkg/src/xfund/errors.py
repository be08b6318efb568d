"""Exception vocabulary shared by all modules.

Every error raised by the engine derives from :class:`XfundError` so callers
can catch the library's failures without masking programming errors.
"""
from __future__ import annotations


class XfundError(Exception):
    """Base class for all xfund errors."""


class InvalidInputError(XfundError, ValueError):
    """Malformed or inconsistent inputs: grid mismatches, bad shapes,
    out-of-range dates, violated preconditions."""


class CalibrationError(XfundError):
    """Lattice calibration produced an infeasible branching probability.

    Carries the offending step and probability so the failure names the
    exact interval instead of surfacing as a NaN later.
    """

    def __init__(self, message: str, step: int | None = None, q: float | None = None):
        super().__init__(message)
        self.step = step
        self.q = q


class ConvergenceError(XfundError):
    """An iterative solve (Picard step, collateral fixed point) did not reach
    tolerance within its iteration budget."""

    def __init__(self, message: str, step: int | None = None, residual: float | None = None):
        super().__init__(message)
        self.step = step
        self.residual = residual


class NumericsError(XfundError):
    """Non-finite values appeared mid-computation."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class EngineInvariantError(XfundError):
    """An internal bookkeeping identity failed (induced funding positions
    violated their sign constraints, decomposition drifted, ...).  Indicates
    a bug or a numerically hostile configuration, not bad user input."""


class InadmissibleStrategyError(XfundError):
    """Discounted netted wealth breached the admissibility floor."""

    def __init__(self, message: str, step: int | None = None, node=None, value: float | None = None):
        super().__init__(message)
        self.step = step
        self.node = node
        self.value = value


class CertificateNotApplicableError(XfundError):
    """The rate ordering hypothesis of the no-arbitrage certificate does not
    hold for the supplied accounts, so no certificate can be issued."""


class SchemaError(XfundError):
    """Config file violates the scenario schema.  ``path`` is the offending
    field path, e.g. ``market.assets[0].sigma``."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(message)
        self.path = path
