"""Synthetic data generators for the simulation study.

Instruments follow a three-factor latent model on top of a Toeplitz
covariance; structural errors come from one of three dependent processes
(network moving average, spatial weights, multiplicative heteroskedastic
mixture); the first-stage error is a correlated mixture of the structural
error and an independent heavy-tailed innovation.

All generators take an explicit numpy Generator and never touch global
RNG state, so a fixed (cell, seed) pair reproduces a dataset bitwise.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import toeplitz

from .errors import ValidationError
from .linalg import sym_sqrt
from .statistic import Dataset

# --------------------------------------------------------------------------
# standardized innovations

_T5_SCALE = np.sqrt(3.0 / 5.0)  # t(5) has variance 5/3


def standardized_t5(rng: np.random.Generator, size) -> np.ndarray:
    """t(5) draws rescaled to unit variance."""
    return rng.standard_t(5, size=size) * _T5_SCALE


def standardized_chi2_6(rng: np.random.Generator, size=None) -> np.ndarray:
    """chi-square(6) draws centered and rescaled to unit variance."""
    return (rng.chisquare(6, size=size) - 6.0) / np.sqrt(12.0)


# --------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class InstrumentDesign:
    """Latent-factor instrument design.

    k                number of instruments
    toeplitz_rho     geometric decay of the base covariance, entries rho^|i-j|
    factor_norms_sq  diagonal of Lambda'Lambda, or None to disable factors
    pi_norm_sq       squared norm of the first-stage coefficient vector
    """

    k: int
    toeplitz_rho: float = 0.7
    factor_norms_sq: tuple[float, float, float] | None = (6.0, 5.0, 3.0)
    pi_norm_sq: float = 1.0

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValidationError(f"k must be positive, got {self.k}")
        if not 0.0 <= self.toeplitz_rho < 1.0:
            raise ValidationError(
                f"toeplitz_rho must lie in [0,1), got {self.toeplitz_rho}"
            )
        if self.factor_norms_sq is not None:
            if len(self.factor_norms_sq) != 3 or any(
                c <= 0 for c in self.factor_norms_sq
            ):
                raise ValidationError("factor_norms_sq must be 3 positive reals")
            if self.k < 3:
                raise ValidationError("k must be >= 3 when factors are enabled")
        if self.pi_norm_sq <= 0:
            raise ValidationError(f"pi_norm_sq must be positive, got {self.pi_norm_sq}")


class SpatialForm(enum.Enum):
    LITERAL = "literal"  # eps = rho_s * W * e
    AUTOREGRESSIVE = "autoregressive"  # eps = (I - rho_s W)^{-1} e


@dataclass(frozen=True)
class NetworkErrors:
    """One-step network moving average on a random graph, unit variance
    per node by construction."""

    gamma: float = 0.5
    expected_degree: float = 5.0


@dataclass(frozen=True)
class SpatialErrors:
    """Spatial error process on a row-standardized random weight matrix."""

    rho_s: float = 0.8
    edge_threshold: float = 0.5
    # The autoregressive form is the default: with an edge probability of
    # 1/2 the weight matrix averages ~N/2 innovations per row, so the
    # one-step form rho_s * W * e has per-component variance of order 1/N
    # and distorts the local-alternative calibration beyond recognition.
    form: SpatialForm = SpatialForm.AUTOREGRESSIVE

    def __post_init__(self) -> None:
        if not 0.0 < self.edge_threshold < 1.0:
            raise ValidationError(
                f"edge_threshold must lie in (0,1), got {self.edge_threshold}"
            )
        if self.form is SpatialForm.AUTOREGRESSIVE and not abs(self.rho_s) < 1.0:
            raise ValidationError(
                f"|rho_s| must be < 1 for the autoregressive form, got {self.rho_s}"
            )


@dataclass(frozen=True)
class MultiplicativeErrors:
    """Trend-scaled mixture of a heavy-tailed series and one common
    skewed shock, inducing heteroskedasticity and equi-correlation."""

    a: float = 10.0
    mix_weight: float = 0.7
    shift: float = 2.4

    def __post_init__(self) -> None:
        if self.a < 0:
            raise ValidationError(f"a must be nonnegative, got {self.a}")


ErrorProcessSpec = NetworkErrors | SpatialErrors | MultiplicativeErrors

PROCESS_NAMES: dict[type, str] = {
    NetworkErrors: "NET-E",
    SpatialErrors: "SPA-E",
    MultiplicativeErrors: "MUL-E",
}


def process_name(spec: ErrorProcessSpec) -> str:
    return PROCESS_NAMES[type(spec)]


@dataclass(frozen=True)
class SimCell:
    """One Monte Carlo grid cell."""

    ratio: float
    rho: float
    h: float
    process: ErrorProcessSpec
    n: int = 400
    beta0: float = 2.0
    design: InstrumentDesign | None = None  # k is overridden by n * ratio

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValidationError(f"n must be >= 2, got {self.n}")
        k = self.n * self.ratio
        if k <= 0 or abs(k - round(k)) > 1e-9:
            raise ValidationError(
                f"n * ratio must be a positive integer, got {self.n} * {self.ratio}"
            )
        if abs(self.rho) > 1.0:
            raise ValidationError(f"|rho| must be <= 1, got {self.rho}")
        if self.h < 0:
            raise ValidationError(f"h must be nonnegative, got {self.h}")

    @property
    def k(self) -> int:
        return int(round(self.n * self.ratio))

    def resolved_design(self) -> InstrumentDesign:
        base = self.design if self.design is not None else InstrumentDesign(k=self.k)
        return replace(base, k=self.k)


@dataclass(frozen=True)
class TruthRecord:
    """Simulation-only ground truth; never part of the public Dataset."""

    eps: np.ndarray
    v: np.ndarray
    pi: np.ndarray
    beta: float


# --------------------------------------------------------------------------
# instruments


@functools.lru_cache(maxsize=16)
def _toeplitz_sqrt(k: int, rho: float) -> np.ndarray:
    """Symmetric square root of the k x k Toeplitz(rho^|i-j|) matrix.

    Cached: within a simulation grid the same (k, rho) is reused across
    thousands of replications and the O(k^3) decomposition would dominate.
    """
    if rho == 0.0:
        return np.eye(k)
    sigma = toeplitz(rho ** np.arange(k))
    return sym_sqrt(sigma)


def factor_loading(design: InstrumentDesign) -> np.ndarray:
    """K x 3 loading matrix with scaled coordinate columns, so that
    Lambda'Lambda = diag(factor_norms_sq) exactly."""
    if design.factor_norms_sq is None:
        raise ValidationError("factors are disabled in this design")
    lam = np.zeros((design.k, 3))
    lam[:3, :3] = np.diag(np.sqrt(design.factor_norms_sq))
    return lam


def gen_instruments(
    design: InstrumentDesign, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw N rows z_i = Lambda eta_i + Sigma^{1/2} f_i.

    eta_i are 3 standardized t(5) draws, f_i are K standard normals.
    """
    if n < 2:
        raise ValidationError(f"n must be >= 2, got {n}")
    k = design.k
    if design.factor_norms_sq is not None:
        eta4 = standardized_t5(rng, (n, 3))
    else:
        eta4 = None
    f = rng.standard_normal((n, k))
    root = _toeplitz_sqrt(k, design.toeplitz_rho)
    z = f @ root  # root is symmetric, so rows are Sigma^{1/2} f_i
    if eta4 is not None:
        z[:, :3] += eta4 * np.sqrt(design.factor_norms_sq)
    return z


def population_covariance(design: InstrumentDesign) -> np.ndarray:
    """Exact K x K covariance of an instrument row: Lambda Lambda' + Toeplitz."""
    k = design.k
    sigma = toeplitz(design.toeplitz_rho ** np.arange(k)) if design.toeplitz_rho else np.eye(k)
    if design.factor_norms_sq is not None:
        lam = factor_loading(design)
        sigma = sigma + lam @ lam.T
    return sigma


def pop_trace_sigma2(design: InstrumentDesign) -> float:
    """tr(Sigma_z^2) for Sigma_z = Lambda Lambda' + Toeplitz, in closed form.

    Because the loading columns are scaled coordinate vectors, the cross
    term only touches the first three diagonal entries of the Toeplitz
    part (which are all 1).
    """
    k = design.k
    rho = design.toeplitz_rho
    d = np.arange(1, k)
    frob_toeplitz = float(k + 2.0 * np.sum((k - d) * rho ** (2 * d)))
    if design.factor_norms_sq is None:
        return frob_toeplitz
    c = np.asarray(design.factor_norms_sq)
    return frob_toeplitz + float(2.0 * c.sum() + np.sum(c**2))


# --------------------------------------------------------------------------
# error processes


def spatial_weights(
    n: int, edge_threshold: float, rng: np.random.Generator
) -> np.ndarray:
    """Random symmetric 0/1 adjacency row-standardized to sum to one.

    An off-diagonal pair gets an edge iff its Uniform(0,1) draw exceeds
    the threshold; rows with no neighbors stay zero.
    """
    a = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    draws = rng.random(len(iu[0]))
    a[iu] = (draws > edge_threshold).astype(float)
    a += a.T
    return row_standardize(a)


def row_standardize(adj: np.ndarray) -> np.ndarray:
    """Divide each nonzero row of an adjacency matrix by its sum."""
    sums = adj.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        w = np.where(sums > 0, adj / sums, 0.0)
    return w


def spatial_errors_from(
    w: np.ndarray, e: np.ndarray, spec: SpatialErrors
) -> np.ndarray:
    """Apply the spatial process to a given weight matrix and innovation."""
    if spec.form is SpatialForm.LITERAL:
        return spec.rho_s * (w @ e)
    return np.linalg.solve(np.eye(w.shape[0]) - spec.rho_s * w, e)


def gen_spatial_errors(
    spec: SpatialErrors, n: int, rng: np.random.Generator
) -> np.ndarray:
    if n < 2:
        raise ValidationError(f"n must be >= 2, got {n}")
    w = spatial_weights(n, spec.edge_threshold, rng)
    e = standardized_t5(rng, n)
    return spatial_errors_from(w, e, spec)


def network_adjacency(
    n: int, expected_degree: float, rng: np.random.Generator
) -> np.ndarray:
    """Erdos-Renyi 0/1 adjacency with the given expected degree."""
    p = min(max(expected_degree / (n - 1), 0.0), 1.0)
    a = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    a[iu] = (rng.random(len(iu[0])) < p).astype(float)
    a += a.T
    return a


def network_errors_from(
    adj: np.ndarray, eta: np.ndarray, gamma: float
) -> np.ndarray:
    """eps_i = (eta_i + gamma * sum of neighbor etas) / sqrt(1 + gamma^2 d_i).

    eta may be batched with shape (..., n); each component has unit
    variance by construction.
    """
    deg = adj.sum(axis=1)
    scale = np.sqrt(1.0 + gamma**2 * deg)
    return (eta + gamma * (eta @ adj)) / scale


def gen_network_errors(
    spec: NetworkErrors, n: int, rng: np.random.Generator
) -> np.ndarray:
    if n < 2:
        raise ValidationError(f"n must be >= 2, got {n}")
    adj = network_adjacency(n, spec.expected_degree, rng)
    eta = rng.standard_normal(n)
    return network_errors_from(adj, eta, spec.gamma)


def gen_multiplicative_errors(
    spec: MultiplicativeErrors, n: int, rng: np.random.Generator
) -> np.ndarray:
    """eps_i = s1 [ zeta_i (omega_i + shift) - s2 ].

    omega mixes an idiosyncratic standardized t(5) with one standardized
    chi-square(6) shock shared by the whole vector (the common shock is
    what makes the errors equi-correlated).  zeta_i = 1 + a i / n is the
    heteroskedastic trend; s2 = shift (1 + a/2) centers the cross-section
    and s1 scales the vector to exact unit average variance.
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    a, w = spec.a, spec.mix_weight
    eta1 = standardized_t5(rng, n)
    eta2 = float(standardized_chi2_6(rng))
    omega = np.sqrt(1.0 - w * w) * eta1 + w * eta2
    zeta = 1.0 + a * np.arange(1, n + 1) / n
    s2 = spec.shift * (1.0 + 0.5 * a)
    s1 = 1.0 / np.sqrt(_multiplicative_variance(spec, n))
    return s1 * (zeta * (omega + spec.shift) - s2)


def _multiplicative_variance(spec: MultiplicativeErrors, n: int) -> float:
    """Average over i of E[(zeta_i (omega_i + shift) - s2)^2] with omega
    mean-zero unit-variance; exact, so the normalized errors have average
    variance one."""
    a, c = spec.a, spec.shift
    zeta = 1.0 + a * np.arange(1, n + 1) / n
    m1 = float(zeta.mean())
    m2 = float((zeta**2).mean())
    s2 = c * (1.0 + 0.5 * a)
    return (1.0 + c * c) * m2 - 2.0 * c * s2 * m1 + s2 * s2


def gen_errors(
    spec: ErrorProcessSpec, n: int, rng: np.random.Generator
) -> np.ndarray:
    if isinstance(spec, NetworkErrors):
        return gen_network_errors(spec, n, rng)
    if isinstance(spec, SpatialErrors):
        return gen_spatial_errors(spec, n, rng)
    if isinstance(spec, MultiplicativeErrors):
        return gen_multiplicative_errors(spec, n, rng)
    raise ValidationError(f"unknown error process spec: {spec!r}")


def gen_first_stage_errors(
    eps: np.ndarray, rho: float, rng: np.random.Generator
) -> np.ndarray:
    """v_i = rho eps_i + sqrt(1 - rho^2) eta_i with standardized t(5) eta."""
    if abs(rho) > 1.0:
        raise ValidationError(f"|rho| must be <= 1, got {rho}")
    eta3 = standardized_t5(rng, np.shape(eps))
    return rho * np.asarray(eps) + np.sqrt(1.0 - rho * rho) * eta3


# --------------------------------------------------------------------------
# local alternative and assembly


def delta_from_h(h: float, trace_sigma2: float, n: int) -> float:
    """Coefficient departure corresponding to a departure level h:
    Delta = h (2 tr(Sigma^2))^{1/5} / sqrt(N)."""
    if trace_sigma2 <= 0:
        raise ValidationError(f"trace_sigma2 must be positive, got {trace_sigma2}")
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if h < 0:
        raise ValidationError(f"h must be nonnegative, got {h}")
    return h * (2.0 * trace_sigma2) ** 0.2 / np.sqrt(n)


def assemble_dataset(
    cell: SimCell, rng: np.random.Generator
) -> tuple[Dataset, TruthRecord]:
    """Generate one replication of a grid cell.

    Draw order: instruments, structural errors, first-stage errors,
    first-stage coefficient.  pi is a uniformly random direction scaled
    to the designed norm: a fixed direction aligned with the smooth
    Toeplitz eigenvectors (such as the constant vector) concentrates an
    order of magnitude more signal in the statistic than a generic one.
    The true beta is the null value plus the local departure.
    """
    design = cell.resolved_design()
    n, k = cell.n, cell.k
    z = gen_instruments(design, n, rng)
    eps = gen_errors(cell.process, n, rng)
    v = gen_first_stage_errors(eps, cell.rho, rng)
    direction = rng.standard_normal(k)
    pi = direction * np.sqrt(design.pi_norm_sq) / np.linalg.norm(direction)
    x = z @ pi + v
    beta = cell.beta0 + delta_from_h(cell.h, pop_trace_sigma2(design), n)
    y = x * beta + eps
    return Dataset(y=y, x=x, z=z), TruthRecord(eps=eps, v=v, pi=pi, beta=beta)
