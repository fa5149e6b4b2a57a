"""Weak-identification-robust inference with high-dimensional instruments."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    DegenerateInstrumentsError,
    DegenerateResidualError,
    HdivError,
    SimulationCellError,
    ValidationError,
)
from .linalg import GramSummary, eigen_quadratic, gram_summary, sym_sqrt  # noqa: F401
from .statistic import (  # noqa: F401
    Alternative,
    Dataset,
    Hypothesis,
    Mode,
    TestOutcome,
    invert_ci,
    normalize_residual,
    p_value,
    q_statistic,
    trace_sigma2_hat,
)
from .dgp import (  # noqa: F401
    InstrumentDesign,
    MultiplicativeErrors,
    NetworkErrors,
    SimCell,
    SpatialErrors,
    SpatialForm,
    assemble_dataset,
    delta_from_h,
    gen_first_stage_errors,
    gen_instruments,
    gen_multiplicative_errors,
    gen_network_errors,
    gen_spatial_errors,
    pop_trace_sigma2,
)
from .montecarlo import (  # noqa: F401
    Noncentrality,
    RejectionRate,
    RejectionTable,
    noncentrality,
    null_normality_diagnostic,
    run_cell,
    run_grid,
    table1_grid,
)
