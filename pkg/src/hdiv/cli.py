"""Command-line interface.

Subcommands: ``test`` (run the feasible test on a CSV dataset),
``simulate`` (rejection-rate grid), ``invert`` (confidence set by test
inversion), ``diagnose`` (null-normality check).

Exit codes: 0 success, 2 missing input, 3 validation, 4 degenerate
statistic, 5 simulation cell failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .dgp import (
    InstrumentDesign,
    MultiplicativeErrors,
    NetworkErrors,
    SimCell,
    SpatialErrors,
)
from .errors import (
    DegenerateInstrumentsError,
    DegenerateResidualError,
    SimulationCellError,
    ValidationError,
)
from .io import load_dataset_csv, render_intervals, render_outcome, render_table
from .montecarlo import run_grid, null_normality_diagnostic, table1_grid
from .statistic import Alternative, Hypothesis, invert_ci, q_statistic

EXIT_OK = 0
EXIT_MISSING_INPUT = 2
EXIT_VALIDATION = 3
EXIT_DEGENERATE = 4
EXIT_CELL_FAILURE = 5

_PROCESS_ALIASES = {
    "net-e": NetworkErrors,
    "net": NetworkErrors,
    "network": NetworkErrors,
    "spa-e": SpatialErrors,
    "spa": SpatialErrors,
    "spatial": SpatialErrors,
    "mul-e": MultiplicativeErrors,
    "mul": MultiplicativeErrors,
    "multiplicative": MultiplicativeErrors,
}

_CONFIG_KEYS = {
    "n",
    "ratios",
    "rhos",
    "hs",
    "processes",
    "beta0",
    "alpha",
    "alternative",
    "design",
}
_DESIGN_KEYS = {"toeplitz_rho", "factor_norms_sq", "pi_norm_sq"}


class _Parser(argparse.ArgumentParser):
    # argparse defaults to exit code 2; bad arguments are a validation
    # failure under this CLI's exit-code contract
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _fail(code: int, error_code: str, message: str) -> int:
    print(
        json.dumps({"error": error_code, "message": message}),
        file=sys.stderr,
    )
    return code


def _alternative(name: str) -> Alternative:
    try:
        return Alternative(name)
    except ValueError:
        raise ValidationError(
            f"alternative must be 'greater' or 'two-sided', got {name!r}"
        )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hdiv", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_test = sub.add_parser("test", help="run the feasible test on a CSV dataset")
    p_test.add_argument("--data", required=True, help="CSV file (header y,x,z1..zK)")
    p_test.add_argument("--beta0", type=float, required=True)
    p_test.add_argument("--alpha", type=float, default=0.05)
    p_test.add_argument("--alt", default="greater", choices=["greater", "two-sided"])
    p_test.add_argument(
        "--format", default="json", choices=["json", "csv", "markdown"]
    )

    p_sim = sub.add_parser("simulate", help="run a rejection-rate grid")
    src = p_sim.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="JSON grid configuration")
    src.add_argument(
        "--table1-defaults",
        action="store_true",
        help="the default 180-cell grid (3 processes x 3 rhos x 5 ratios x 4 hs)",
    )
    p_sim.add_argument("--reps", type=int, required=True)
    p_sim.add_argument("--seed", type=int, required=True)
    p_sim.add_argument("--threads", type=int, default=None)
    p_sim.add_argument(
        "--format", default="json", choices=["json", "csv", "markdown"]
    )

    p_inv = sub.add_parser("invert", help="confidence set by test inversion")
    p_inv.add_argument("--data", required=True)
    p_inv.add_argument("--lo", type=float, required=True)
    p_inv.add_argument("--hi", type=float, required=True)
    p_inv.add_argument("--steps", type=int, required=True)
    p_inv.add_argument("--alpha", type=float, default=0.05)
    p_inv.add_argument("--alt", default="two-sided", choices=["greater", "two-sided"])

    p_diag = sub.add_parser("diagnose", help="simulation diagnostics")
    p_diag.add_argument(
        "--null-normality",
        action="store_true",
        required=True,
        help="KS check of the null standard-normal limit",
    )
    p_diag.add_argument("--n", type=int, default=400)
    p_diag.add_argument("--k", type=int, default=100)
    p_diag.add_argument("--reps", type=int, default=2000)
    p_diag.add_argument("--seed", type=int, required=True)
    return parser


# --------------------------------------------------------------------------
# simulate config


def _parse_design(raw: dict) -> InstrumentDesign:
    unknown = set(raw) - _DESIGN_KEYS
    if unknown:
        raise ValidationError(f"unknown design keys: {sorted(unknown)}")
    kwargs = dict(raw)
    if "factor_norms_sq" in kwargs and kwargs["factor_norms_sq"] is not None:
        kwargs["factor_norms_sq"] = tuple(kwargs["factor_norms_sq"])
    # k is a placeholder; every cell overrides it from n * ratio
    return InstrumentDesign(k=3, **kwargs)


def _parse_process(name) -> type:
    if not isinstance(name, str) or name.lower() not in _PROCESS_ALIASES:
        raise ValidationError(
            f"processes: unknown process {name!r} "
            f"(expected one of NET-E, SPA-E, MUL-E)"
        )
    return _PROCESS_ALIASES[name.lower()]


def grid_from_config(raw: dict) -> tuple[list[SimCell], Hypothesis]:
    if not isinstance(raw, dict):
        raise ValidationError("config root must be a JSON object")
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    n = int(raw.get("n", 400))
    ratios = raw.get("ratios", [0.25, 0.5, 1.0, 2.0, 3.0])
    rhos = raw.get("rhos", [0.5, 0.9, -0.9])
    hs = raw.get("hs", [0.0, 1.0, 2.0, 5.0])
    names = raw.get("processes", ["NET-E", "SPA-E", "MUL-E"])
    beta0 = float(raw.get("beta0", 2.0))
    alpha = float(raw.get("alpha", 0.05))
    alternative = _alternative(raw.get("alternative", "greater"))
    design = _parse_design(raw["design"]) if "design" in raw else None
    for key, seq in (("ratios", ratios), ("rhos", rhos), ("hs", hs), ("processes", names)):
        if not isinstance(seq, list) or not seq:
            raise ValidationError(f"{key} must be a nonempty list")
    cells = [
        SimCell(
            ratio=float(r),
            rho=float(rho),
            h=float(h),
            process=_parse_process(name)(),
            n=n,
            beta0=beta0,
            design=design,
        )
        for name in names
        for rho in rhos
        for r in ratios
        for h in hs
    ]
    return cells, Hypothesis(beta0=beta0, alternative=alternative, alpha=alpha)


# --------------------------------------------------------------------------
# commands


def cmd_test(args: argparse.Namespace) -> int:
    path = Path(args.data)
    if not path.exists():
        return _fail(EXIT_MISSING_INPUT, "missing_input", f"no such file: {path}")
    try:
        data = load_dataset_csv(path)
        hyp = Hypothesis(
            beta0=args.beta0, alternative=_alternative(args.alt), alpha=args.alpha
        )
        outcome = q_statistic(data, hyp)
    except ValidationError as exc:
        return _fail(EXIT_VALIDATION, exc.code, str(exc))
    except (DegenerateResidualError, DegenerateInstrumentsError) as exc:
        return _fail(EXIT_DEGENERATE, exc.code, str(exc))
    sys.stdout.write(render_outcome(outcome, args.format))
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    try:
        if args.reps < 1:
            raise ValidationError(f"reps must be >= 1, got {args.reps}")
        if args.threads is not None and args.threads < 1:
            raise ValidationError(f"threads must be >= 1, got {args.threads}")
        if args.table1_defaults:
            cells, hyp = table1_grid(), Hypothesis(beta0=2.0)
        else:
            cfg_path = Path(args.config)
            if not cfg_path.exists():
                return _fail(
                    EXIT_MISSING_INPUT, "missing_input", f"no such file: {cfg_path}"
                )
            try:
                raw = json.loads(cfg_path.read_text(encoding="utf-8"))
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{cfg_path}: invalid JSON: {exc}")
            cells, hyp = grid_from_config(raw)
        table = run_grid(cells, args.reps, args.seed, hyp, threads=args.threads)
    except ValidationError as exc:
        return _fail(EXIT_VALIDATION, exc.code, str(exc))
    except SimulationCellError as exc:
        return _fail(EXIT_CELL_FAILURE, exc.code, str(exc))
    sys.stdout.write(render_table(table, args.format))
    return EXIT_OK


def cmd_invert(args: argparse.Namespace) -> int:
    path = Path(args.data)
    if not path.exists():
        return _fail(EXIT_MISSING_INPUT, "missing_input", f"no such file: {path}")
    try:
        data = load_dataset_csv(path)
        intervals = invert_ci(
            data,
            alpha=args.alpha,
            lo=args.lo,
            hi=args.hi,
            steps=args.steps,
            alternative=_alternative(args.alt),
        )
    except ValidationError as exc:
        return _fail(EXIT_VALIDATION, exc.code, str(exc))
    except (DegenerateResidualError, DegenerateInstrumentsError) as exc:
        return _fail(EXIT_DEGENERATE, exc.code, str(exc))
    grid = {"lo": args.lo, "hi": args.hi, "steps": args.steps, "alpha": args.alpha}
    sys.stdout.write(render_intervals(intervals, grid))
    return EXIT_OK


def cmd_diagnose(args: argparse.Namespace) -> int:
    try:
        result = null_normality_diagnostic(args.n, args.k, args.reps, args.seed)
    except ValidationError as exc:
        return _fail(EXIT_VALIDATION, exc.code, str(exc))
    sys.stdout.write(json.dumps({"schema_version": 1, **result}, indent=2) + "\n")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "test": cmd_test,
        "simulate": cmd_simulate,
        "invert": cmd_invert,
        "diagnose": cmd_diagnose,
    }
    return handlers[args.command](args)


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
