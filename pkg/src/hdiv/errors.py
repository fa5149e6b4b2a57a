"""Exception hierarchy shared across the package.

Every error carries a short machine-readable ``code`` used by the CLI to
pick exit statuses and to tag JSON error output.
"""

from __future__ import annotations


class HdivError(Exception):
    """Base class for all package-specific errors."""

    code = "error"


class ValidationError(HdivError, ValueError):
    """Malformed or out-of-contract input."""

    code = "validation"


class DegenerateResidualError(HdivError):
    """The null residual vector is (numerically) zero; the self-normalized
    statistic is undefined."""

    code = "degenerate_residual"


class DegenerateInstrumentsError(HdivError):
    """All instrument cross-products vanish, so the trace estimator is
    nonpositive and the feasible statistic is undefined."""

    code = "degenerate_instruments"


class SimulationCellError(HdivError):
    """A Monte Carlo cell exceeded the tolerated fraction of degenerate
    replications."""

    code = "cell_failure"
