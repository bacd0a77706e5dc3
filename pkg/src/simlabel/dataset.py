"""Delimited-text datasets, schema validation, and time-holdout splitting.

Input files are UTF-8 comma-separated text with a single header row. Column
roles come from a separate JSON config mapping column name to role. Missing
cells are empty strings (the schema is numeric-only, so this is unambiguous),
labels are strictly -1 or +1 integers, and timestamps are ISO-8601.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from pathlib import Path
from typing import Iterator

from .errors import DataError, SchemaError

SOURCE_REAL = "real"
SOURCE_SIMILAR = "similar"

PROVENANCE_COLUMNS = ("source", "vote", "matched_count")


class Role(str, Enum):
    """What a column means to the pipeline.

    Similarity features are the ones compared between samples; estimation-only
    features exist in labeled data but are missing from unlabeled samples and
    get reconstructed for confident matches.
    """

    SIMILARITY = "similarity"
    ESTIMATION = "estimation-only"
    LABEL = "label"
    TIMESTAMP = "timestamp"
    ID = "id"


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered column declarations: (name, role) pairs.

    Exactly one label, one timestamp, and one id column are required, plus at
    least one similarity feature. All feature columns are numeric.
    """

    columns: tuple[tuple[str, Role], ...]

    def __post_init__(self):
        names = [name for name, _ in self.columns]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate column names in schema: {', '.join(dupes)}")
        for role in (Role.LABEL, Role.TIMESTAMP, Role.ID):
            count = sum(1 for _, r in self.columns if r is role)
            if count != 1:
                raise SchemaError(f"schema needs exactly one {role.value} column, found {count}")
        if not any(r is Role.SIMILARITY for _, r in self.columns):
            raise SchemaError("schema needs at least one similarity feature")

    def _names_for(self, role: Role) -> tuple[str, ...]:
        return tuple(name for name, r in self.columns if r is role)

    @property
    def similarity_features(self) -> tuple[str, ...]:
        return self._names_for(Role.SIMILARITY)

    @property
    def estimation_features(self) -> tuple[str, ...]:
        return self._names_for(Role.ESTIMATION)

    @property
    def feature_columns(self) -> tuple[str, ...]:
        """All numeric feature columns, similarity first, in declaration order."""
        return tuple(
            name for name, r in self.columns if r in (Role.SIMILARITY, Role.ESTIMATION)
        )

    @property
    def label_column(self) -> str:
        return self._names_for(Role.LABEL)[0]

    @property
    def timestamp_column(self) -> str:
        return self._names_for(Role.TIMESTAMP)[0]

    @property
    def id_column(self) -> str:
        return self._names_for(Role.ID)[0]

    @classmethod
    def from_mapping(cls, mapping: dict[str, str]) -> "FeatureSchema":
        columns = []
        bad = []
        for name, role_text in mapping.items():
            try:
                columns.append((name, Role(role_text)))
            except ValueError:
                bad.append(f"{name!r}: unknown role {role_text!r}")
        if bad:
            valid = ", ".join(r.value for r in Role)
            raise SchemaError(f"invalid roles ({'; '.join(bad)}); valid roles: {valid}")
        return cls(tuple(columns))

    def to_mapping(self) -> dict[str, str]:
        return {name: role.value for name, role in self.columns}


def load_schema(path: str | Path) -> FeatureSchema:
    """Read a schema config: a JSON object mapping column name to role."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"schema file not found: {path}")
    try:
        mapping = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise SchemaError(f"schema file {path} is not valid JSON: {err}") from err
    if not isinstance(mapping, dict) or not all(isinstance(v, str) for v in mapping.values()):
        raise SchemaError(f"schema file {path} must map column names to role strings")
    return FeatureSchema.from_mapping(mapping)


@dataclass(frozen=True)
class Sample:
    """One row. Missing feature cells are simply absent from `features`.

    `source`, `vote`, and `matched_count` are row provenance used by merged
    and similar datasets; plain loaded rows are "real" with no vote.
    """

    id: str
    timestamp: datetime
    features: dict[str, float]
    label: int | None = None
    source: str = SOURCE_REAL
    vote: float | None = None
    matched_count: int | None = None

    def get(self, name: str) -> float | None:
        return self.features.get(name)

    def has(self, name: str) -> bool:
        return name in self.features


@dataclass
class Dataset:
    """Ordered, schema-conforming rows with unique ids."""

    schema: FeatureSchema
    rows: list[Sample]
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.rows)

    def ids(self) -> list[str]:
        return [row.id for row in self.rows]

    def by_id(self) -> dict[str, Sample]:
        return {row.id: row for row in self.rows}

    def labeled_rows(self) -> list[Sample]:
        return [row for row in self.rows if row.label is not None]


def _parse_feature(text: str, name: str) -> float:
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"feature {name!r} must be finite, got {text!r}")
    return value


def load_dataset(
    path: str | Path,
    schema: FeatureSchema,
    strict_labeled: bool = True,
) -> Dataset:
    """Parse a CSV file against the schema.

    Every violation is collected and reported together, each naming its data
    row (1-based, header excluded). `strict_labeled=False` skips the check
    that labeled rows carry all similarity features; merged and similar
    datasets written by this package may legitimately lack some.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty, expected a header row") from None
        needed = [name for name, _ in schema.columns]
        missing_cols = [name for name in needed if name not in header]
        if missing_cols:
            raise DataError(
                f"{path}: header is missing schema columns: {', '.join(missing_cols)}"
            )
        col_index = {name: header.index(name) for name in needed}

        id_col = schema.id_column
        ts_col = schema.timestamp_column
        label_col = schema.label_column
        sim_features = schema.similarity_features

        rows: list[Sample] = []
        violations: list[str] = []
        seen_ids: dict[str, int] = {}
        for row_num, cells in enumerate(reader, start=1):
            if len(cells) != len(header):
                violations.append(
                    f"row {row_num}: expected {len(header)} columns, found {len(cells)}"
                )
                continue

            def cell(name: str) -> str:
                return cells[col_index[name]].strip()

            ok = True
            sample_id = cell(id_col)
            if not sample_id:
                violations.append(f"row {row_num}: empty id")
                ok = False
            elif sample_id in seen_ids:
                violations.append(
                    f"row {row_num}: duplicate id {sample_id!r} (first seen on row {seen_ids[sample_id]})"
                )
                ok = False
            else:
                seen_ids[sample_id] = row_num

            timestamp = None
            ts_text = cell(ts_col)
            try:
                timestamp = datetime.fromisoformat(ts_text)
            except ValueError:
                violations.append(
                    f"row {row_num}: timestamp {ts_text!r} is not ISO-8601"
                )
                ok = False

            label: int | None = None
            label_text = cell(label_col)
            if label_text:
                try:
                    label = int(label_text)
                except ValueError:
                    label = None
                if label not in (-1, 1):
                    violations.append(
                        f"row {row_num}: label must be -1 or +1, got {label_text!r}"
                    )
                    ok = False

            features: dict[str, float] = {}
            for name, role in schema.columns:
                if role not in (Role.SIMILARITY, Role.ESTIMATION):
                    continue
                text = cell(name)
                if not text:
                    continue
                try:
                    features[name] = _parse_feature(text, name)
                except ValueError:
                    violations.append(
                        f"row {row_num}: column {name!r} is not a finite number: {text!r}"
                    )
                    ok = False

            if ok and strict_labeled and label is not None:
                absent = [f for f in sim_features if f not in features]
                if absent:
                    violations.append(
                        f"row {row_num}: labeled row missing similarity features: {', '.join(absent)}"
                    )
                    ok = False

            if ok:
                rows.append(Sample(id=sample_id, timestamp=timestamp, features=features, label=label))

    if violations:
        shown = "; ".join(violations)
        raise DataError(f"{path}: {len(violations)} invalid rows: {shown}", violations)
    return Dataset(schema=schema, rows=rows, provenance=str(path))


def _format_value(value: float) -> str:
    # repr() of a builtin float is the shortest round-tripping form, so written
    # values reload exactly; float() strips numpy scalar types first
    return repr(float(value))


def dataset_to_csv_text(data: Dataset, include_provenance: bool = False) -> str:
    header = [name for name, _ in data.schema.columns]
    if include_provenance:
        header = header + list(PROVENANCE_COLUMNS)
    lines = [",".join(header)]
    writer_rows = []
    for row in data.rows:
        cells = []
        for name, role in data.schema.columns:
            if role is Role.ID:
                cells.append(row.id)
            elif role is Role.TIMESTAMP:
                cells.append(row.timestamp.isoformat())
            elif role is Role.LABEL:
                cells.append("" if row.label is None else str(row.label))
            else:
                value = row.features.get(name)
                cells.append("" if value is None else _format_value(value))
        if include_provenance:
            cells.append(row.source)
            cells.append("" if row.vote is None else _format_value(row.vote))
            cells.append("" if row.matched_count is None else str(row.matched_count))
        writer_rows.append(cells)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for cells in writer_rows:
        writer.writerow(cells)
    return buf.getvalue()


def atomic_write_text(path: str | Path, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see partial output."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_dataset(data: Dataset, path: str | Path, include_provenance: bool = False) -> None:
    atomic_write_text(path, dataset_to_csv_text(data, include_provenance=include_provenance))


def time_holdout_split(data: Dataset, test_fraction: float) -> tuple[Dataset, Dataset]:
    """Split at a holdout date so training never sees rows at or after it.

    The holdout date H is the earliest timestamp, scanning back from the most
    recent, at which the rows with timestamp >= H first reach
    ceil(test_fraction * N). Rows sharing the boundary timestamp all land in
    test, so the test side may exceed the exact fraction but never leaks into
    train.
    """
    if not 0.0 <= test_fraction <= 1.0:
        raise ValueError(f"test_fraction must be in [0, 1], got {test_fraction}")
    if not data.rows:
        raise DataError("cannot split an empty dataset")

    n = len(data.rows)
    # round() undoes binary representation error in decimal fractions
    # (e.g. 0.07 * 100 is slightly above 7.0) before the ceiling is taken
    target = math.ceil(round(test_fraction * n, 9))
    if target == 0:
        train = Dataset(data.schema, list(data.rows), f"{data.provenance} | holdout train (all rows, fraction 0)")
        test = Dataset(data.schema, [], f"{data.provenance} | holdout test (empty, fraction 0)")
        return train, test

    counts: dict[datetime, int] = {}
    for row in data.rows:
        counts[row.timestamp] = counts.get(row.timestamp, 0) + 1
    cumulative = 0
    holdout = None
    for ts in sorted(counts, reverse=True):
        cumulative += counts[ts]
        if cumulative >= target:
            holdout = ts
            break
    assert holdout is not None  # target <= n guarantees the scan ends

    train_rows = [row for row in data.rows if row.timestamp < holdout]
    test_rows = [row for row in data.rows if row.timestamp >= holdout]
    iso = holdout.isoformat()
    train = Dataset(data.schema, train_rows, f"{data.provenance} | holdout train (< {iso})")
    test = Dataset(data.schema, test_rows, f"{data.provenance} | holdout test (>= {iso})")
    return train, test
