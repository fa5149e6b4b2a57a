"""Dense linear-algebra kernels shared by the statistic and the simulators.

All routines are pure functions of their ndarray inputs.  The Gram summary
is dimension-adaptive: it only ever forms the smaller of the two
cross-product matrices (K x K or N x N), which matters when the number of
instruments is a multiple of the sample size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

#: eigenvalues of a nominally PSD matrix may dip slightly below zero in
#: floating point; anything above this magnitude is treated as genuinely
#: negative.
PSD_EIG_TOL = 1e-10

SYMMETRY_TOL = 1e-10
UNIT_NORM_TOL = 1e-10


def as_instrument_matrix(z: np.ndarray) -> np.ndarray:
    """Validate and coerce an N x K instrument matrix to float64.

    Requires a 2-D array with finite entries, N >= 2 and K >= 1.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise ValidationError(f"instrument matrix must be 2-D, got shape {z.shape}")
    n, k = z.shape
    if n < 2:
        raise ValidationError(f"need at least 2 observations, got N={n}")
    if k < 1:
        raise ValidationError("need at least one instrument column")
    if not np.all(np.isfinite(z)):
        raise ValidationError("instrument matrix contains non-finite entries")
    return z


@dataclass(frozen=True)
class GramSummary:
    """Scalar functionals of the instrument Gram matrices.

    trace_sbar     tr(Z Z') / N
    frob_sq_cross  ||Z'Z||_F^2, identical to ||Z Z'||_F^2
    row_norms_sq   diagonal of Z Z' (squared row norms)
    """

    trace_sbar: float
    frob_sq_cross: float
    row_norms_sq: np.ndarray


def gram_summary(z: np.ndarray) -> GramSummary:
    """Compute the Gram functionals, forming only the smaller cross-product."""
    z = as_instrument_matrix(z)
    n, k = z.shape
    row_norms_sq = np.einsum("ij,ij->i", z, z)
    if k <= n:
        g = z.T @ z
    else:
        g = z @ z.T
    frob_sq = float(np.einsum("ij,ij->", g, g))
    return GramSummary(
        trace_sbar=float(row_norms_sq.sum()) / n,
        frob_sq_cross=frob_sq,
        row_norms_sq=row_norms_sq,
    )


def sym_sqrt(sigma: np.ndarray) -> np.ndarray:
    """Symmetric square root of a symmetric PSD matrix.

    Uses an eigendecomposition with eigenvalues clamped at zero.  Raises if
    the input is asymmetric beyond tolerance or has an eigenvalue below
    -PSD_EIG_TOL (relative to the largest eigenvalue magnitude).
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {sigma.shape}")
    scale = max(float(np.abs(sigma).max()), 1.0)
    if float(np.abs(sigma - sigma.T).max()) > SYMMETRY_TOL * scale:
        raise ValidationError("matrix is not symmetric to tolerance")
    vals, vecs = np.linalg.eigh(0.5 * (sigma + sigma.T))
    if vals[0] < -PSD_EIG_TOL * max(float(vals[-1]), 1.0):
        raise ValidationError(
            f"matrix is not positive semidefinite (min eigenvalue {vals[0]:.3e})"
        )
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    return root @ vecs.T


def eigen_quadratic(z: np.ndarray, ybar: np.ndarray) -> float:
    """Quadratic form ybar' (Z Z'/N) ybar via an explicit eigendecomposition.

    Slow verification oracle for the production path, which never
    decomposes: it sums lambda_l * (q_l' ybar)^2 over the spectrum of
    Z Z' / N.
    """
    z = as_instrument_matrix(z)
    ybar = np.asarray(ybar, dtype=np.float64)
    n = z.shape[0]
    if ybar.shape != (n,):
        raise ValidationError(f"ybar must have shape ({n},), got {ybar.shape}")
    nrm = float(np.linalg.norm(ybar))
    if abs(nrm - 1.0) > UNIT_NORM_TOL:
        raise ValidationError(f"ybar must be a unit vector, got norm {nrm!r}")
    vals, vecs = np.linalg.eigh(z @ z.T / n)
    proj = vecs.T @ ybar
    return float(np.sum(vals * proj**2))
