"""Replication engine: rejection-rate grids and power diagnostics.

Random streams are derived per (base seed, cell, replication) through a
counter-based generator (Philox keyed via a hash of the cell), so results
do not depend on execution order or thread count, and editing the grid
never perturbs the draws of unrelated cells.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import kstest

from . import __version__
from .dgp import (
    ErrorProcessSpec,
    InstrumentDesign,
    MultiplicativeErrors,
    NetworkErrors,
    SimCell,
    SpatialErrors,
    assemble_dataset,
    process_name,
)
from .errors import (
    DegenerateInstrumentsError,
    DegenerateResidualError,
    SimulationCellError,
    ValidationError,
)
from .statistic import Dataset, Hypothesis, q_statistic

#: a cell fails when more than this fraction of replications is degenerate
DEGENERATE_CELL_THRESHOLD = 0.01

TABLE1_RATIOS = (0.25, 0.5, 1.0, 2.0, 3.0)
TABLE1_RHOS = (0.5, 0.9, -0.9)
TABLE1_HS = (0.0, 1.0, 2.0, 5.0)


def table1_processes() -> tuple[ErrorProcessSpec, ...]:
    return (NetworkErrors(), SpatialErrors(), MultiplicativeErrors())


def table1_grid(
    n: int = 400,
    beta0: float = 2.0,
    design: InstrumentDesign | None = None,
) -> list[SimCell]:
    """The 180-cell grid of the simulation study: 3 processes x 3 rhos
    x 5 ratios x 4 departure levels."""
    return [
        SimCell(ratio=r, rho=rho, h=h, process=proc, n=n, beta0=beta0, design=design)
        for proc in table1_processes()
        for rho in TABLE1_RHOS
        for r in TABLE1_RATIOS
        for h in TABLE1_HS
    ]


# --------------------------------------------------------------------------
# stream derivation


def cell_fingerprint(cell: SimCell) -> int:
    """Stable 64-bit hash of a cell's full parameterization."""

    def encode(obj):
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            d = {"__type__": type(obj).__name__}
            for f in dataclasses.fields(obj):
                d[f.name] = encode(getattr(obj, f.name))
            return d
        if isinstance(obj, (np.floating, np.integer)):
            return obj.item()
        if isinstance(obj, (tuple, list)):
            return [encode(v) for v in obj]
        if hasattr(obj, "value"):  # enums
            return obj.value
        return obj

    payload = json.dumps(encode(cell), sort_keys=True, separators=(",", ":"))
    digest = hashlib.blake2b(payload.encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


def replication_stream(
    base_seed: int, cell: SimCell, rep: int
) -> np.random.Generator:
    """Independent counter-based stream for one replication of one cell."""
    seq = np.random.SeedSequence([base_seed, cell_fingerprint(cell), rep])
    return np.random.Generator(np.random.Philox(seq))


# --------------------------------------------------------------------------
# aggregates


@dataclass(frozen=True)
class RejectionRate:
    cell: SimCell
    reps: int  # replications that produced a statistic
    rejections: int
    rate: float
    mc_std_err: float
    degenerate: int = 0

    def to_dict(self) -> dict:
        return {
            "process": process_name(self.cell.process),
            "rho": self.cell.rho,
            "ratio": self.cell.ratio,
            "h": self.cell.h,
            "n": self.cell.n,
            "k": self.cell.k,
            "reps": self.reps,
            "rejections": self.rejections,
            "rate": self.rate,
            "mc_std_err": self.mc_std_err,
            "degenerate": self.degenerate,
        }


@dataclass(frozen=True)
class RejectionTable:
    entries: tuple[RejectionRate, ...]
    base_seed: int
    alpha: float
    alternative: str
    software_version: str = __version__

    def lookup(
        self, process: str, rho: float, ratio: float, h: float
    ) -> RejectionRate:
        for e in self.entries:
            c = e.cell
            if (
                process_name(c.process) == process
                and c.rho == rho
                and c.ratio == ratio
                and c.h == h
            ):
                return e
        raise KeyError(f"no cell ({process}, rho={rho}, ratio={ratio}, h={h})")

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "metadata": {
                "base_seed": self.base_seed,
                "alpha": self.alpha,
                "alternative": self.alternative,
                "software_version": self.software_version,
                "degenerate_policy": (
                    "degenerate replications excluded from the rate; cell fails "
                    f"above {DEGENERATE_CELL_THRESHOLD:.0%}"
                ),
            },
            "cells": [e.to_dict() for e in self.entries],
        }


@dataclass(frozen=True)
class Noncentrality:
    value: float
    terms: tuple[float, float, float]


# --------------------------------------------------------------------------
# engine


def run_cell(
    cell: SimCell, reps: int, base_seed: int, hyp: Hypothesis
) -> RejectionRate:
    """Rejection rate of the feasible test over ``reps`` replications.

    Degenerate replications (undefined statistic) are excluded from the
    rate and counted; the cell fails if they exceed the threshold.
    """
    if reps < 1:
        raise ValidationError(f"reps must be >= 1, got {reps}")
    rejections = 0
    degenerate = 0
    for r in range(reps):
        rng = replication_stream(base_seed, cell, r)
        try:
            data, _ = assemble_dataset(cell, rng)
            outcome = q_statistic(data, hyp)
        except (DegenerateInstrumentsError, DegenerateResidualError):
            degenerate += 1
            continue
        rejections += int(outcome.reject)
    if degenerate > DEGENERATE_CELL_THRESHOLD * reps:
        raise SimulationCellError(
            f"cell {process_name(cell.process)} rho={cell.rho} ratio={cell.ratio} "
            f"h={cell.h}: {degenerate}/{reps} degenerate replications"
        )
    good = reps - degenerate
    rate = rejections / good
    return RejectionRate(
        cell=cell,
        reps=good,
        rejections=rejections,
        rate=rate,
        mc_std_err=float(np.sqrt(rate * (1.0 - rate) / good)),
        degenerate=degenerate,
    )


def default_threads() -> int:
    env = os.environ.get("HDIV_THREADS")
    if env is not None:
        try:
            value = int(env)
        except ValueError:
            raise ValidationError(f"HDIV_THREADS must be a positive integer, got {env!r}")
        if value < 1:
            raise ValidationError(f"HDIV_THREADS must be a positive integer, got {env!r}")
        return value
    return os.cpu_count() or 1


def run_grid(
    grid: list[SimCell],
    reps: int,
    base_seed: int,
    hyp: Hypothesis,
    threads: int | None = None,
) -> RejectionTable:
    """Run every cell of a grid and collect the rates.

    Cells run concurrently when threads > 1; per-replication streams make
    the result identical to a serial run.  Failures are gathered and
    re-raised together with cell identification.
    """
    if not grid:
        raise ValidationError("grid must be nonempty")
    threads = default_threads() if threads is None else threads
    if threads < 1:
        raise ValidationError(f"threads must be >= 1, got {threads}")

    failures: list[str] = []
    results: list[RejectionRate | None] = [None] * len(grid)

    def work(i: int) -> None:
        try:
            results[i] = run_cell(grid[i], reps, base_seed, hyp)
        except SimulationCellError as exc:
            failures.append(str(exc))

    if threads == 1:
        for i in range(len(grid)):
            work(i)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(len(grid))))

    if failures:
        raise SimulationCellError("; ".join(sorted(failures)))
    return RejectionTable(
        entries=tuple(results),  # type: ignore[arg-type]
        base_seed=base_seed,
        alpha=hyp.alpha,
        alternative=hyp.alternative.value,
    )


# --------------------------------------------------------------------------
# diagnostics


def noncentrality(
    pi: np.ndarray,
    v: np.ndarray,
    eps: np.ndarray,
    z: np.ndarray,
    h: float,
    trace_sigma2: float,
) -> Noncentrality:
    """Asymptotic mean shift of the statistic under the local alternative.

    Three summands: the first-stage signal pushed through the squared
    cross-product matrix, a first-stage noise term, and a cross term.
    Matrix squares are applied through repeated matrix-vector products.
    """
    z = np.asarray(z, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    eps = np.asarray(eps, dtype=np.float64).reshape(-1)
    n, k = z.shape
    if pi.shape[0] != k or v.shape[0] != n or eps.shape[0] != n:
        raise ValidationError("dimension mismatch in noncentrality inputs")
    eps_ss = float(eps @ eps)
    if eps_ss <= 0.0:
        raise ValidationError("eps must be nonzero")
    if trace_sigma2 <= 0.0:
        raise ValidationError(f"trace_sigma2 must be positive, got {trace_sigma2}")

    t2 = 2.0 * trace_sigma2
    trace_sn = float(np.einsum("ij,ij->", z, z)) / n  # tr(S_N) = tr(Sbar_N)

    sn_pi = (z.T @ (z @ pi)) / n  # S_N pi without forming S_N
    pi_sn2_pi = float(sn_pi @ sn_pi)
    term1 = (
        n / (eps_ss * t2**0.1) * h * h * (pi_sn2_pi - trace_sn / n * float(pi @ pi))
    )

    zv = z.T @ v
    v_sbar_v = float(zv @ zv) / n
    term2 = (
        n
        / (eps_ss * t2**0.1)
        * h
        * h
        * (v_sbar_v / n - trace_sn / (n * n) * float(v @ v))
    )

    ze = z.T @ eps
    v_sbar_e = float(zv @ ze) / n
    term3 = (
        2.0
        * np.sqrt(n)
        / (eps_ss * t2**0.3)
        * h
        * (v_sbar_e - trace_sn / n * float(v @ eps))
    )

    terms = (float(term1), float(term2), float(term3))
    return Noncentrality(value=float(sum(terms)), terms=terms)


def null_normality_diagnostic(
    n: int,
    k: int,
    reps: int,
    seed: int,
    shift: float = 0.0,
) -> dict:
    """Kolmogorov-Smirnov check of the null limit.

    Simulates ``reps`` feasible statistics under an iid-normal design
    (Z, eps, x all standard normal, beta = beta0) and compares against
    N(0,1).  ``shift`` displaces each statistic; nonzero values serve as
    a negative control.
    """
    if reps < 100:
        raise ValidationError(f"need at least 100 replications, got {reps}")
    hyp = Hypothesis(beta0=0.0)
    stats = np.empty(reps)
    for r in range(reps):
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence([seed, n, k, r]))
        )
        z = rng.standard_normal((n, k))
        eps = rng.standard_normal(n)
        x = rng.standard_normal(n)
        data = Dataset(y=eps, x=x, z=z)  # y = x*beta + eps with beta = beta0 = 0
        stats[r] = q_statistic(data, hyp).statistic + shift
    ks = kstest(stats, "norm")
    return {"ks_statistic": float(ks.statistic), "p_value": float(ks.pvalue)}
