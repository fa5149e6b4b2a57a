"""Self-normalized test statistic for high-dimensional IV regression.

The statistic compares the quadratic form of the normalized null residual
in the instrument Gram matrix with its trace, scaled by an estimate of the
trace of the squared instrument covariance.  Under the null it is
asymptotically standard normal when the number of instruments grows
proportionally with the sample size.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .errors import (
    DegenerateInstrumentsError,
    DegenerateResidualError,
    ValidationError,
)
from .linalg import as_instrument_matrix, gram_summary

DEGENERATE_RESIDUAL_FLOOR = 1e-300


class Alternative(enum.Enum):
    GREATER = "greater"
    TWO_SIDED = "two-sided"


class Mode(enum.Enum):
    ORACLE = "oracle"
    FEASIBLE = "feasible"


@dataclass(frozen=True)
class Dataset:
    """Outcome, endogenous regressor, and N x K instrument matrix."""

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray

    def __post_init__(self) -> None:
        z = as_instrument_matrix(self.z)
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        x = np.asarray(self.x, dtype=np.float64).reshape(-1)
        n = z.shape[0]
        if y.shape[0] != n or x.shape[0] != n:
            raise ValidationError(
                f"y, x, z must share N: got {y.shape[0]}, {x.shape[0]}, {n}"
            )
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise ValidationError("y or x contains non-finite entries")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def k(self) -> int:
        return self.z.shape[1]


@dataclass(frozen=True)
class Hypothesis:
    """Null value, alternative direction, and test level."""

    beta0: float
    alternative: Alternative = Alternative.GREATER
    alpha: float = 0.05

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError(f"alpha must lie in (0,1), got {self.alpha}")
        if not np.isfinite(self.beta0):
            raise ValidationError("beta0 must be finite")


@dataclass(frozen=True)
class TestOutcome:
    statistic: float
    trace_sbar: float
    trace_sigma2: float
    p_value: float
    reject: bool
    n: int
    k: int
    mode: Mode
    alpha: float = field(default=0.05)
    alternative: Alternative = field(default=Alternative.GREATER)

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "trace_sbar": self.trace_sbar,
            "trace_sigma2": self.trace_sigma2,
            "p_value": self.p_value,
            "reject": self.reject,
            "n": self.n,
            "k": self.k,
            "mode": self.mode.value,
            "alpha": self.alpha,
            "alternative": self.alternative.value,
        }


def normalize_residual(
    y: np.ndarray, x: np.ndarray, beta0: float
) -> tuple[np.ndarray, float]:
    """Normalized null residual and its squared norm.

    Returns (ybar, ss) with ybar = (y - x*beta0)/||y - x*beta0|| and
    ss = ||y - x*beta0||^2.  Raises DegenerateResidualError when the
    residual is numerically zero.
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if y.shape != x.shape:
        raise ValidationError(f"y and x must match: {y.shape} vs {x.shape}")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x)) and np.isfinite(beta0)):
        raise ValidationError("non-finite input to normalize_residual")
    resid = y - beta0 * x
    ss = float(resid @ resid)
    if ss < DEGENERATE_RESIDUAL_FLOOR:
        raise DegenerateResidualError(
            "null residual is numerically zero; statistic undefined"
        )
    return resid / np.sqrt(ss), ss


def trace_sigma2_hat(z: np.ndarray) -> float:
    """Pair-sum estimator of tr(Sigma^2) from the instrument rows.

    Computed as (||Z'Z||_F^2 - sum_i ||z_i||^4) / (N (N-1)), which is
    algebraically the average of (z_i' z_j)^2 over distinct pairs but
    costs only one cross-product on the smaller side.
    """
    g = gram_summary(z)
    n = g.row_norms_sq.shape[0]
    est = (g.frob_sq_cross - float(np.sum(g.row_norms_sq**2))) / (n * (n - 1))
    if est <= 0.0:
        raise DegenerateInstrumentsError(
            "trace estimator is nonpositive; all instrument cross-products vanish"
        )
    return est


def p_value(statistic: float, alternative: Alternative) -> float:
    """One- or two-sided standard normal p-value."""
    if not np.isfinite(statistic):
        raise ValidationError(f"statistic must be finite, got {statistic!r}")
    if alternative is Alternative.GREATER:
        return float(norm.sf(statistic))
    return float(2.0 * norm.sf(abs(statistic)))


def q_statistic(
    data: Dataset,
    hyp: Hypothesis,
    trace_sigma2: float | None = None,
) -> TestOutcome:
    """Oracle or feasible test statistic with its p-value.

    When ``trace_sigma2`` is supplied the oracle scaling is used;
    otherwise it is estimated from the instruments (feasible mode).  The
    Gram quadratic form is computed as ||Z' ybar||^2 / N, so no N x N
    matrix is ever formed here.
    """
    if trace_sigma2 is not None:
        if not (np.isfinite(trace_sigma2) and trace_sigma2 > 0.0):
            raise ValidationError(
                f"oracle trace_sigma2 must be positive, got {trace_sigma2!r}"
            )
        t, mode = float(trace_sigma2), Mode.ORACLE
    else:
        t, mode = trace_sigma2_hat(data.z), Mode.FEASIBLE

    ybar, _ = normalize_residual(data.y, data.x, hyp.beta0)
    n = data.n
    proj = data.z.T @ ybar
    quad = float(proj @ proj) / n
    trace_sbar = float(np.einsum("ij,ij->", data.z, data.z)) / n
    stat = float(np.sqrt(n * n / (2.0 * t)) * (quad - trace_sbar / n))
    p = p_value(stat, hyp.alternative)
    return TestOutcome(
        statistic=stat,
        trace_sbar=trace_sbar,
        trace_sigma2=t,
        p_value=p,
        reject=p < hyp.alpha,
        n=n,
        k=data.k,
        mode=mode,
        alpha=hyp.alpha,
        alternative=hyp.alternative,
    )


def invert_ci(
    data: Dataset,
    alpha: float,
    lo: float,
    hi: float,
    steps: int,
    alternative: Alternative = Alternative.TWO_SIDED,
) -> list[tuple[float, float]]:
    """Confidence set for beta by grid inversion of the feasible test.

    Evaluates the test on a uniform grid of ``steps`` null values over
    [lo, hi] and merges consecutive non-rejected points into closed
    intervals.  The per-point cost is a single K-vector update: Z'y and
    Z'x are precomputed once.
    """
    if not lo < hi:
        raise ValidationError(f"need lo < hi, got [{lo}, {hi}]")
    if steps < 2:
        raise ValidationError(f"need at least 2 grid points, got {steps}")
    if not 0.0 < alpha < 1.0:
        raise ValidationError(f"alpha must lie in (0,1), got {alpha}")

    t = trace_sigma2_hat(data.z)
    n = data.n
    zy = data.z.T @ data.y
    zx = data.z.T @ data.x
    trace_sbar = float(np.einsum("ij,ij->", data.z, data.z)) / n
    scale = float(np.sqrt(n * n / (2.0 * t)))

    # ||Z'(y - b x)||^2 and ||y - b x||^2 as quadratics in b
    a0 = float(zy @ zy)
    a1 = float(zy @ zx)
    a2 = float(zx @ zx)
    s0 = float(data.y @ data.y)
    s1 = float(data.y @ data.x)
    s2 = float(data.x @ data.x)

    betas = np.linspace(lo, hi, steps)
    accepted = np.zeros(steps, dtype=bool)
    for i, b in enumerate(betas):
        ss = s0 - 2.0 * b * s1 + b * b * s2
        if ss < DEGENERATE_RESIDUAL_FLOOR:
            # zero residual: the null fits perfectly, never rejected
            accepted[i] = True
            continue
        quad = (a0 - 2.0 * b * a1 + b * b * a2) / (n * ss)
        stat = scale * (quad - trace_sbar / n)
        accepted[i] = p_value(stat, alternative) >= alpha

    intervals: list[tuple[float, float]] = []
    start: int | None = None
    for i, ok in enumerate(accepted):
        if ok and start is None:
            start = i
        elif not ok and start is not None:
            intervals.append((float(betas[start]), float(betas[i - 1])))
            start = None
    if start is not None:
        intervals.append((float(betas[start]), float(betas[steps - 1])))
    return intervals
