"""Point-in-time column statistics and the planner-side risk signal.

Statistics are captured from a concrete table generation: row count, exact
distinct count, and an equi-width histogram.  Estimates interpolate
uniformly within buckets; their dispersion score (variance proxy) rises with
the share of the estimate contributed by partially covered buckets, or with
1/ndv for equality predicates.  The planner-side risk value combines that
dispersion with staleness measured in drift generations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from typing import IO

import numpy as np

from .datagen import Table
from .errors import ValidationError

DEFAULT_BUCKETS = 32

COMPARISONS = ("<", "<=", "=", ">=", ">")


@dataclass(frozen=True)
class Predicate:
    column: str
    comparison: str
    constant: int

    def __post_init__(self):
        if self.comparison not in COMPARISONS:
            raise ValidationError(f"unknown comparison {self.comparison!r}")

    def mask(self, values: np.ndarray) -> np.ndarray:
        ops = {
            "<": np.less, "<=": np.less_equal, "=": np.equal,
            ">=": np.greater_equal, ">": np.greater,
        }
        return ops[self.comparison](values, self.constant)

    def __str__(self) -> str:
        return f"{self.column} {self.comparison} {self.constant}"


@dataclass(frozen=True)
class Estimate:
    value: float           # cardinality or selectivity, >= 0
    variance_proxy: float  # dimensionless dispersion score, >= 0

    def scaled(self, factor: float) -> "Estimate":
        return Estimate(self.value * factor, self.variance_proxy)


@dataclass(frozen=True)
class ColumnStats:
    column: str
    row_count: int
    ndv: int
    min_value: int
    max_value: int
    bucket_edges: tuple[float, ...]   # len B+1, partitions [min, max+1); empty table -> ()
    bucket_counts: tuple[int, ...]    # len B; sums to row_count
    captured_generation: int

    @property
    def bucket_count(self) -> int:
        return len(self.bucket_counts)


@dataclass(frozen=True)
class TableStats:
    """All per-column stats captured from one table at one generation."""

    table: str
    row_count: int
    captured_generation: int
    columns: dict[str, ColumnStats]

    def column(self, name: str) -> ColumnStats:
        if name not in self.columns:
            raise ValidationError(f"no statistics for column {name!r} of table {self.table}")
        return self.columns[name]


def capture_statistics(table: Table, buckets: int = DEFAULT_BUCKETS) -> TableStats:
    """Scan the table and freeze per-column statistics at its current generation."""
    if buckets < 1:
        raise ValidationError(f"bucket count must be >= 1, got {buckets}")
    cols: dict[str, ColumnStats] = {}
    for spec in table.spec.columns:
        values = table.columns[spec.name]
        n = len(values)
        if n == 0:
            cols[spec.name] = ColumnStats(
                column=spec.name, row_count=0, ndv=0, min_value=0, max_value=0,
                bucket_edges=(), bucket_counts=(), captured_generation=table.generation,
            )
            continue
        lo = int(values.min())
        hi = int(values.max())
        ndv = int(np.unique(values).size)
        # integer value v occupies [v, v+1), so the histogram spans [lo, hi+1)
        edges = np.linspace(lo, hi + 1, buckets + 1)
        counts, _ = np.histogram(values, bins=edges)
        cols[spec.name] = ColumnStats(
            column=spec.name, row_count=n, ndv=ndv, min_value=lo, max_value=hi,
            bucket_edges=tuple(float(e) for e in edges),
            bucket_counts=tuple(int(c) for c in counts),
            captured_generation=table.generation,
        )
    return TableStats(table=table.spec.name, row_count=table.row_count,
                      captured_generation=table.generation, columns=cols)


def _range_fraction(stats: ColumnStats, lo: float, hi: float) -> tuple[float, float]:
    """Estimated fraction of rows in [lo, hi) and the share coming from
    partially covered buckets (uniform-within-bucket interpolation)."""
    if stats.row_count == 0 or not stats.bucket_counts:
        return 0.0, 0.0
    total = float(stats.row_count)
    mass = 0.0
    partial = 0.0
    edges = stats.bucket_edges
    for i, count in enumerate(stats.bucket_counts):
        b_lo, b_hi = edges[i], edges[i + 1]
        width = b_hi - b_lo
        if width <= 0.0:  # degenerate single-value histogram
            covered = 1.0 if lo <= b_lo < hi else 0.0
        else:
            overlap = min(hi, b_hi) - max(lo, b_lo)
            covered = min(max(overlap / width, 0.0), 1.0)
        if covered <= 0.0:
            continue
        contribution = covered * count
        mass += contribution
        if covered < 1.0:
            partial += contribution
    sel = min(mass / total, 1.0)
    partial_share = (partial / mass) if mass > 0.0 else 0.0
    return sel, partial_share


def estimate_selectivity(stats: ColumnStats, pred: Predicate) -> Estimate:
    """Selectivity in [0, 1] for one predicate against captured statistics."""
    if pred.column != stats.column:
        raise ValidationError(
            f"predicate column {pred.column!r} does not match statistics for {stats.column!r}")
    if stats.row_count == 0:
        return Estimate(0.0, 0.0)

    c = float(pred.constant)
    lo = float(stats.min_value)
    # +1 on the upper edge so integer max is inside the last half-open interval
    hi = float(stats.max_value) + 1.0

    if pred.comparison == "=":
        inside = stats.min_value <= pred.constant <= stats.max_value
        sel = (1.0 / stats.ndv) if (inside and stats.ndv > 0) else 0.0
        return Estimate(sel, 1.0 / stats.ndv if stats.ndv > 0 else 0.0)

    if pred.comparison == "<":
        bounds = (lo, c)
    elif pred.comparison == "<=":
        bounds = (lo, c + 1.0)
    elif pred.comparison == ">=":
        bounds = (c, hi)
    else:  # ">"
        bounds = (c + 1.0, hi)

    sel, partial_share = _range_fraction(stats, *bounds)
    return Estimate(sel, partial_share)


def optimizer_risk(stats: ColumnStats, estimate: Estimate, current_generation: int,
                   w_variance: float = 1.0, w_staleness: float = 1.0) -> float:
    """Planner-side risk: weighted dispersion plus staleness in generations."""
    if current_generation < stats.captured_generation:
        raise ValidationError(
            f"generation regressed: current {current_generation} < "
            f"captured {stats.captured_generation}")
    return risk_value(estimate.variance_proxy, current_generation - stats.captured_generation,
                      w_variance, w_staleness)


def risk_value(variance_proxy: float, staleness: int,
               w_variance: float = 1.0, w_staleness: float = 1.0) -> float:
    if staleness < 0:
        raise ValidationError(f"staleness must be >= 0, got {staleness}")
    return w_variance * variance_proxy + w_staleness * staleness


# ── persistence (pre-drift stats survive a drift) ──────────────────────────


def dump_stats(stats: TableStats, out: IO[str]) -> None:
    doc = {
        "table": stats.table,
        "row_count": stats.row_count,
        "captured_generation": stats.captured_generation,
        "columns": {name: asdict(cs) for name, cs in sorted(stats.columns.items())},
    }
    json.dump(doc, out, indent=2, sort_keys=True)
    out.write("\n")


def load_stats(fh: IO[str]) -> TableStats:
    doc = json.load(fh)
    cols = {}
    for name, cdoc in doc["columns"].items():
        cols[name] = ColumnStats(
            column=cdoc["column"], row_count=cdoc["row_count"], ndv=cdoc["ndv"],
            min_value=cdoc["min_value"], max_value=cdoc["max_value"],
            bucket_edges=tuple(cdoc["bucket_edges"]),
            bucket_counts=tuple(cdoc["bucket_counts"]),
            captured_generation=cdoc["captured_generation"],
        )
    return TableStats(table=doc["table"], row_count=doc["row_count"],
                      captured_generation=doc["captured_generation"], columns=cols)
