"""Feature ranges and the Gower general similarity coefficient.

Similarity between two samples is the mean, over the similarity features
present in both, of per-feature scores 1 - |a_k - b_k| / r_k, where r_k is
the max-minus-min spread of feature k pooled over the reference datasets.
Per-feature scores are clamped into [0, 1] (synthetic probe values can land
outside the frozen spread), and features missing in either sample drop out
of both the sum and the divisor. A range table is computed once per run and
frozen, so every comparison uses the same normalizers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .dataset import Dataset, FeatureSchema, Sample, atomic_write_text
from .errors import KernelError


@dataclass(frozen=True)
class RangeTable:
    """Frozen per-feature spreads, plus the observed bounds they came from.

    `ranges` maps each similarity feature to its spread r_k >= 0. `bounds`
    keeps the observed (min, max) pair; probes use it to clamp synthetic
    values back into the seen region. Iteration order is schema order and is
    part of the contract: similarity sums follow it deterministically.
    """

    ranges: dict[str, float]
    bounds: dict[str, tuple[float, float]]
    source: str = ""

    def __post_init__(self):
        for name, value in self.ranges.items():
            if value < 0:
                raise KernelError(f"range for {name!r} is negative: {value}")
            if name not in self.bounds:
                raise KernelError(f"no observed bounds for feature {name!r}")
        for name, (lo, hi) in self.bounds.items():
            if lo > hi:
                raise KernelError(f"bounds for {name!r} are inverted: ({lo}, {hi})")

    def features(self) -> tuple[str, ...]:
        return tuple(self.ranges)

    def to_json_dict(self) -> dict:
        return {
            "ranges": {name: float(value) for name, value in self.ranges.items()},
            "bounds": {name: [float(lo), float(hi)] for name, (lo, hi) in self.bounds.items()},
            "source": self.source,
        }

    @classmethod
    def from_json_dict(cls, payload: dict) -> "RangeTable":
        try:
            ranges = {str(k): float(v) for k, v in payload["ranges"].items()}
            bounds = {str(k): (float(v[0]), float(v[1])) for k, v in payload["bounds"].items()}
        except (KeyError, TypeError, ValueError, IndexError) as err:
            raise KernelError(f"malformed range table payload: {err}") from err
        return cls(ranges=ranges, bounds=bounds, source=str(payload.get("source", "")))


def save_range_table(table: RangeTable, path: str | Path) -> None:
    atomic_write_text(path, json.dumps(table.to_json_dict(), indent=2) + "\n")


def load_range_table(path: str | Path) -> RangeTable:
    path = Path(path)
    if not path.exists():
        raise KernelError(f"range table file not found: {path}")
    return RangeTable.from_json_dict(json.loads(path.read_text(encoding="utf-8")))


def compute_ranges(
    sources: Dataset | Iterable[Dataset],
    schema: FeatureSchema,
) -> RangeTable:
    """Pool every non-missing value of each similarity feature and take max - min.

    Pooling across all given datasets (labeled and unlabeled alike) keeps both
    populations comparable under one metric. A feature with no value anywhere
    is an error; a constant feature gets range 0.
    """
    if isinstance(sources, Dataset):
        sources = [sources]
    sources = list(sources)
    if not sources:
        raise KernelError("compute_ranges needs at least one source dataset")

    lo: dict[str, float] = {}
    hi: dict[str, float] = {}
    for data in sources:
        for row in data.rows:
            for name in schema.similarity_features:
                value = row.features.get(name)
                if value is None:
                    continue
                if name not in lo or value < lo[name]:
                    lo[name] = value
                if name not in hi or value > hi[name]:
                    hi[name] = value

    missing = [name for name in schema.similarity_features if name not in lo]
    if missing:
        raise KernelError(
            f"features with no observed values in any source: {', '.join(missing)}"
        )

    ranges = {name: hi[name] - lo[name] for name in schema.similarity_features}
    bounds = {name: (lo[name], hi[name]) for name in schema.similarity_features}
    total_rows = sum(len(d) for d in sources)
    labels = [d.provenance or "<unnamed>" for d in sources]
    source = f"pooled over {len(sources)} dataset(s), {total_rows} rows: {'; '.join(labels)}"
    return RangeTable(ranges=ranges, bounds=bounds, source=source)


def gower_similarity(a: Sample, b: Sample, ranges: RangeTable) -> float:
    """Mean per-feature similarity over features present in both samples.

    Zero-range features score 1 on exact equality and 0 otherwise (the
    continuous limit of the formula). The result is always in [0, 1] and the
    accumulation order is the range table's feature order, so repeated calls
    are bit-identical.
    """
    total = 0.0
    count = 0
    a_features = a.features
    b_features = b.features
    for name, spread in ranges.ranges.items():
        va = a_features.get(name)
        if va is None:
            continue
        vb = b_features.get(name)
        if vb is None:
            continue
        if spread == 0.0:
            score = 1.0 if va == vb else 0.0
        else:
            divergence = abs(va - vb) / spread
            if divergence > 1.0:
                divergence = 1.0
            score = 1.0 - divergence
        total += score
        count += 1
    if count == 0:
        raise KernelError(
            f"samples {a.id!r} and {b.id!r} share no similarity feature values"
        )
    return total / count
