"""Dataset CSV ingestion and result serialization.

CSV contract: UTF-8, comma-separated, header ``y,x,z1,...,zK``, decimal
numerals, no missing values.  Parse errors report the offending row and
column.
"""

from __future__ import annotations

import csv
import io as _io
import json
from pathlib import Path

import numpy as np

from .dgp import process_name
from .errors import ValidationError
from .montecarlo import RejectionTable, TABLE1_RHOS
from .statistic import Dataset, TestOutcome

SCHEMA_VERSION = 1


def load_dataset_csv(path: str | Path) -> Dataset:
    """Load a Dataset from a CSV file with header y,x,z1..zK."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file")
        header = [h.strip() for h in header]
        expected = ["y", "x"] + [f"z{i}" for i in range(1, len(header) - 1)]
        if len(header) < 3 or header != expected:
            raise ValidationError(
                f"{path}: header must be y,x,z1,...,zK; got {','.join(header)}"
            )
        k = len(header) - 2
        rows: list[list[float]] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValidationError(
                    f"{path}: row {lineno} has {len(row)} cells, expected {len(header)}"
                )
            parsed = []
            for col, cell in enumerate(row, start=1):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ValidationError(
                        f"{path}: non-numeric cell at row {lineno}, column {col}: {cell!r}"
                    )
            rows.append(parsed)
    if len(rows) < 2:
        raise ValidationError(f"{path}: need at least 2 observations, got {len(rows)}")
    if k < 1:
        raise ValidationError(f"{path}: need at least one instrument column")
    arr = np.asarray(rows, dtype=np.float64)
    return Dataset(y=arr[:, 0], x=arr[:, 1], z=arr[:, 2:])


def save_dataset_csv(data: Dataset, path: str | Path) -> None:
    path = Path(path)
    header = ["y", "x"] + [f"z{i}" for i in range(1, data.k + 1)]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n):
            writer.writerow(
                [repr(float(data.y[i])), repr(float(data.x[i]))]
                + [repr(float(v)) for v in data.z[i]]
            )


# --------------------------------------------------------------------------
# result rendering


def render_outcome(outcome: TestOutcome, fmt: str) -> str:
    d = {"schema_version": SCHEMA_VERSION, **outcome.to_dict()}
    if fmt == "json":
        return json.dumps(d, indent=2) + "\n"
    if fmt == "csv":
        buf = _io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(d.keys())
        writer.writerow(d.values())
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["| field | value |", "| --- | --- |"]
        lines += [f"| {k} | {v} |" for k, v in d.items()]
        return "\n".join(lines) + "\n"
    raise ValidationError(f"unknown output format: {fmt!r}")


def render_intervals(
    intervals: list[tuple[float, float]], grid: dict
) -> str:
    return (
        json.dumps(
            {
                "schema_version": SCHEMA_VERSION,
                "grid": grid,
                "intervals": [[lo, hi] for lo, hi in intervals],
            },
            indent=2,
        )
        + "\n"
    )


def render_table(table: RejectionTable, fmt: str) -> str:
    d = table.to_dict()
    if fmt == "json":
        return json.dumps(d, indent=2) + "\n"
    if fmt == "csv":
        buf = _io.StringIO()
        for key, value in d["metadata"].items():
            buf.write(f"# {key}: {value}\n")
        fields = list(d["cells"][0].keys())
        writer = csv.DictWriter(buf, fieldnames=fields)
        writer.writeheader()
        for cell in d["cells"]:
            writer.writerow(cell)
        return buf.getvalue()
    if fmt == "markdown":
        return _render_table_markdown(table)
    raise ValidationError(f"unknown output format: {fmt!r}")


def _ratio_label(r: float) -> str:
    from fractions import Fraction

    frac = Fraction(r).limit_denominator(64)
    return str(frac)


def _render_table_markdown(table: RejectionTable) -> str:
    """Row blocks by departure level h, rows by K/N, columns by
    (process, rho), rates in percent."""
    processes = []
    rhos = []
    ratios = []
    hs = []
    for e in table.entries:
        c = e.cell
        name = process_name(c.process)
        if name not in processes:
            processes.append(name)
        if c.rho not in rhos:
            rhos.append(c.rho)
        if c.ratio not in ratios:
            ratios.append(c.ratio)
        if c.h not in hs:
            hs.append(c.h)
    ratios = sorted(ratios)
    hs = sorted(hs)
    if set(rhos) == set(TABLE1_RHOS):
        rhos = list(TABLE1_RHOS)

    header = ["(K/N, rho)"] + [f"{p} {rho:g}" for p in processes for rho in rhos]
    lines = [
        "| " + " | ".join(header) + " |",
        "|" + "|".join([" --- "] * len(header)) + "|",
    ]
    index = {
        (process_name(e.cell.process), e.cell.rho, e.cell.ratio, e.cell.h): e
        for e in table.entries
    }
    for h in hs:
        lines.append(
            "| " + " | ".join([f"**h = {h:g}**"] + [""] * (len(header) - 1)) + " |"
        )
        for r in ratios:
            cells = []
            for p in processes:
                for rho in rhos:
                    e = index.get((p, rho, r, h))
                    cells.append(f"{100 * e.rate:.1f}" if e is not None else "")
            lines.append("| " + " | ".join([_ratio_label(r)] + cells) + " |")
    meta = table.to_dict()["metadata"]
    lines.append("")
    lines.append(
        "seed {base_seed}, alpha {alpha}, alternative {alternative}, "
        "version {software_version}".format(**meta)
    )
    return "\n".join(lines) + "\n"
