"""Deterministic synthetic tables and controlled drift.

Tables are columnar int64 vectors generated from a seed via SplitMix64
(see rng module), so identical (spec, seed) pairs are bitwise identical on
any machine.  Drift produces a *new* table one generation later whose
columns are a fresh deterministic sample of the drifted distribution
(scaled row count, shifted value domain, optionally replaced skew); the
input table is never mutated.  Statistics captured before a drift therefore
describe a distribution the drifted table no longer follows.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from typing import IO, Optional

import numpy as np

from .errors import ValidationError
from .rng import Stream, derive_seed

UNIFORM = "uniform"
ZIPF = "zipf"

_zipf_cdf_cache: dict[tuple[int, float], np.ndarray] = {}


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    low: int
    high: int
    distribution: str = UNIFORM
    skew: float = 1.0  # zipf only

    def validate(self) -> None:
        if not self.name:
            raise ValidationError("column name must be non-empty")
        if self.low > self.high:
            raise ValidationError(f"column {self.name}: empty range [{self.low}, {self.high}]")
        if self.distribution not in (UNIFORM, ZIPF):
            raise ValidationError(f"column {self.name}: unknown distribution {self.distribution!r}")
        if self.distribution == ZIPF and not self.skew > 0:
            raise ValidationError(f"column {self.name}: zipf skew must be > 0, got {self.skew}")


@dataclass(frozen=True)
class TableSpec:
    name: str
    row_count: int
    columns: tuple[ColumnSpec, ...]

    def validate(self) -> None:
        if not self.name:
            raise ValidationError("table name must be non-empty")
        if self.row_count < 0:
            raise ValidationError(f"table {self.name}: row_count must be >= 0, got {self.row_count}")
        if not self.columns:
            raise ValidationError(f"table {self.name}: at least one column required")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ValidationError(f"table {self.name}: duplicate column names")
        for col in self.columns:
            col.validate()

    def column(self, name: str) -> ColumnSpec:
        for col in self.columns:
            if col.name == name:
                return col
        raise ValidationError(f"table {self.name}: no column {name!r}")


@dataclass(frozen=True)
class Table:
    spec: TableSpec
    generation: int
    columns: dict[str, np.ndarray] = field(repr=False)

    @property
    def row_count(self) -> int:
        return self.spec.row_count

    @property
    def name(self) -> str:
        return self.spec.name

    def column(self, name: str) -> np.ndarray:
        if name not in self.columns:
            raise ValidationError(f"table {self.spec.name}: no column {name!r}")
        return self.columns[name]

    @property
    def nbytes(self) -> int:
        return sum(arr.nbytes for arr in self.columns.values())


@dataclass(frozen=True)
class DistributionChange:
    """Replacement sampling distribution applied to every column by a drift."""

    distribution: str
    skew: float = 1.0


@dataclass(frozen=True)
class DriftSpec:
    scale_factor: float = 1.0
    domain_shift: int = 0
    skew_change: Optional[DistributionChange] = None

    def validate(self) -> None:
        if not self.scale_factor > 0:
            raise ValidationError(f"scale_factor must be > 0, got {self.scale_factor}")


def _zipf_cdf(domain_size: int, skew: float) -> np.ndarray:
    key = (domain_size, skew)
    cached = _zipf_cdf_cache.get(key)
    if cached is None:
        ranks = np.arange(1, domain_size + 1, dtype=np.float64)
        weights = ranks ** (-skew)
        cached = np.cumsum(weights) / weights.sum()
        _zipf_cdf_cache[key] = cached
    return cached


def _sample_column(col: ColumnSpec, rows: int, stream: Stream) -> np.ndarray:
    if rows == 0:
        return np.empty(0, dtype=np.int64)
    if col.distribution == UNIFORM:
        return stream.integers(col.low, col.high, rows)
    # zipf: rank 1 (most frequent) maps to the low end of the domain
    cdf = _zipf_cdf(col.high - col.low + 1, col.skew)
    u = stream.unit(rows)
    ranks = np.searchsorted(cdf, u, side="right")
    return (ranks + col.low).astype(np.int64)


def generate_table(spec: TableSpec, seed: int) -> Table:
    """Sample a fresh generation-0 table; identical (spec, seed) is bitwise stable."""
    spec.validate()
    columns: dict[str, np.ndarray] = {}
    for col in spec.columns:
        stream = Stream(derive_seed(seed, f"col/{spec.name}/{col.name}"))
        columns[col.name] = _sample_column(col, spec.row_count, stream)
    return Table(spec=spec, generation=0, columns=columns)


def apply_drift(table: Table, drift: DriftSpec, seed: int) -> Table:
    """Produce the next-generation table under the given drift.

    The result is a deterministic fresh sample of the drifted distribution:
    row count scaled to round(old * scale_factor), every column's domain
    shifted by domain_shift, and the sampling distribution replaced when
    skew_change is given.  The input table is untouched and its generation
    counter only ever increases in the returned copy.
    """
    drift.validate()
    new_rows = int(round(table.spec.row_count * drift.scale_factor))
    new_cols = []
    for col in table.spec.columns:
        changed = col
        if drift.skew_change is not None:
            changed = replace(changed, distribution=drift.skew_change.distribution,
                              skew=drift.skew_change.skew)
        changed = replace(changed, low=changed.low + drift.domain_shift,
                          high=changed.high + drift.domain_shift)
        new_cols.append(changed)
    new_spec = TableSpec(name=table.spec.name, row_count=new_rows, columns=tuple(new_cols))
    new_spec.validate()
    gen = table.generation + 1
    columns: dict[str, np.ndarray] = {}
    for col in new_spec.columns:
        stream = Stream(derive_seed(seed, f"drift/{new_spec.name}/{col.name}/{gen}"))
        columns[col.name] = _sample_column(col, new_rows, stream)
    return Table(spec=new_spec, generation=gen, columns=columns)


# ── config / debug I/O ─────────────────────────────────────────────────────


def table_spec_from_json(doc: dict) -> TableSpec:
    """Build a TableSpec from a parsed JSON document; unknown keys rejected."""
    allowed = {"name", "row_count", "columns"}
    unknown = set(doc) - allowed
    if unknown:
        raise ValidationError(f"unknown table spec keys: {sorted(unknown)}")
    cols = []
    for cdoc in doc.get("columns", []):
        callowed = {"name", "low", "high", "distribution", "skew"}
        cunknown = set(cdoc) - callowed
        if cunknown:
            raise ValidationError(f"unknown column spec keys: {sorted(cunknown)}")
        cols.append(ColumnSpec(
            name=cdoc["name"], low=int(cdoc["low"]), high=int(cdoc["high"]),
            distribution=cdoc.get("distribution", UNIFORM),
            skew=float(cdoc.get("skew", 1.0)),
        ))
    spec = TableSpec(name=doc["name"], row_count=int(doc["row_count"]), columns=tuple(cols))
    spec.validate()
    return spec


def load_table_spec(path: str) -> TableSpec:
    with open(path, encoding="utf-8") as fh:
        return table_spec_from_json(json.load(fh))


def dump_table_csv(table: Table, out: IO[str]) -> None:
    """Write the table as CSV, header row = column names."""
    names = [c.name for c in table.spec.columns]
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(names)
    cols = [table.columns[n] for n in names]
    for i in range(table.row_count):
        writer.writerow([int(col[i]) for col in cols])
