"""Interpretability probes: probability grids, similarity shells, recourse.

A probability grid sweeps two features over a rectangle while holding the
rest of the sample fixed, recording the model score at every point. A
similarity shell draws random perturbations of selected features that stay
within a fixed Gower similarity of the base sample; scanning the shell for
points the model classifies differently answers whether recourse exists
within that similarity, and the closest such point doubles as a candidate
action list.

Shell generation splits the total divergence budget (feature count times
1 - d) across the varied features with uniform random simplex weights, moves
each feature by its share of the budget in a random direction, and clamps to
the observed feature bounds. Every emitted sample is re-verified against the
kernel; a draw that fails the constraint is rejected and redrawn. Draws for
sample i come from a dedicated stream seeded by (seed, i), so output is
identical no matter how the work is scheduled.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .dataset import Sample, atomic_write_text
from .errors import ProbeError
from .evaluation import classify
from .kernel import RangeTable, gower_similarity
from .model import LinearModel, ScoreFile

Scorer = Callable[[Sequence[Sample]], np.ndarray]

MAX_SHELL_ATTEMPTS = 64


def _as_scorer(model) -> Scorer:
    if isinstance(model, LinearModel):
        return model.score_samples
    if callable(model):
        return lambda samples: np.asarray(model(samples), dtype=np.float64)
    raise ProbeError(f"cannot score with object of type {type(model).__name__}")


@dataclass(frozen=True, eq=False)
class ProbeGrid:
    """Model scores over a two-feature rectangle, other features held at the base."""

    sample_id: str
    feature_x: str
    feature_y: str
    x_values: tuple[float, ...]
    y_values: tuple[float, ...]
    probabilities: np.ndarray  # shape (len(x_values), len(y_values))

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([self.feature_x, self.feature_y, "score"])
        for i, x in enumerate(self.x_values):
            for j, y in enumerate(self.y_values):
                writer.writerow([repr(x), repr(y), repr(float(self.probabilities[i, j]))])
        return buf.getvalue()


def probability_grid(
    model,
    base: Sample,
    fx: str,
    fy: str,
    x_axis: tuple[float, float, int],
    y_axis: tuple[float, float, int],
) -> ProbeGrid:
    """Evaluate the model on every (fx, fy) grid point around the base sample.

    Axes are (low, high, count) with values evenly spaced. The grid cell at
    the base sample's own coordinates scores identically to scoring the base
    sample directly, because both go through the same scoring path.
    """
    if fx == fy:
        raise ProbeError("grid features must differ")
    if isinstance(model, LinearModel):
        for feature in (fx, fy):
            if feature not in model.weights:
                raise ProbeError(f"feature {feature!r} not in model")
        missing = [f for f in model.features if f not in base.features]
        if missing:
            raise ProbeError(
                f"base sample {base.id!r} missing model features: {', '.join(missing)}"
            )
    scorer = _as_scorer(model)

    def axis(spec: tuple[float, float, int], name: str) -> tuple[float, ...]:
        lo, hi, count = spec
        if count < 1:
            raise ProbeError(f"{name} axis needs at least one point")
        return tuple(float(v) for v in np.linspace(lo, hi, int(count)))

    x_values = axis(x_axis, "x")
    y_values = axis(y_axis, "y")

    samples = []
    for x in x_values:
        for y in y_values:
            features = dict(base.features)
            features[fx] = x
            features[fy] = y
            samples.append(replace(base, features=features))
    scores = np.asarray(scorer(samples), dtype=np.float64)
    grid = scores.reshape(len(x_values), len(y_values))
    return ProbeGrid(
        sample_id=base.id,
        feature_x=fx,
        feature_y=fy,
        x_values=x_values,
        y_values=y_values,
        probabilities=grid,
    )


@dataclass(frozen=True)
class ShellSample:
    """One perturbed copy of the base sample, verified to satisfy the similarity floor."""

    sample: Sample
    similarity: float
    score: float | None = None
    crossed: bool | None = None


def similarity_shell(
    base: Sample,
    vary: Sequence[str],
    ranges: RangeTable,
    d: float,
    n: int,
    seed: int,
    workers: int = 1,
) -> list[ShellSample]:
    """Draw n perturbations of the vary features with Gower similarity >= d to base."""
    if not vary:
        raise ProbeError("similarity_shell needs a non-empty vary set")
    unknown = [f for f in vary if f not in ranges.ranges]
    if unknown:
        raise ProbeError(f"vary features not in the range table: {', '.join(unknown)}")
    absent = [f for f in vary if f not in base.features]
    if absent:
        raise ProbeError(
            f"vary features missing from base sample {base.id!r}: {', '.join(absent)}"
        )
    if not 0.0 <= d <= 1.0:
        raise ProbeError(f"similarity floor d must be in [0, 1], got {d}")

    present = [f for f in ranges.ranges if f in base.features]
    budget = len(present) * (1.0 - d)
    spreads = np.array([ranges.ranges[f] for f in vary], dtype=np.float64)
    lows = np.array([ranges.bounds[f][0] for f in vary], dtype=np.float64)
    highs = np.array([ranges.bounds[f][1] for f in vary], dtype=np.float64)
    base_values = np.array([base.features[f] for f in vary], dtype=np.float64)
    k = len(vary)

    def draw(index: int) -> ShellSample:
        rng = np.random.default_rng((seed, index))
        for _ in range(MAX_SHELL_ATTEMPTS):
            shares = rng.dirichlet(np.ones(k))
            signs = rng.integers(0, 2, size=k) * 2 - 1
            values = base_values + signs * shares * budget * spreads
            values = np.clip(values, lows, highs)
            features = dict(base.features)
            for name, value in zip(vary, values):
                features[name] = float(value)
            candidate = replace(
                base, id=f"{base.id}-shell-{index:05d}", features=features, label=None
            )
            similarity = gower_similarity(base, candidate, ranges)
            if similarity >= d:
                return ShellSample(sample=candidate, similarity=similarity)
        raise ProbeError(
            f"could not draw a shell sample above similarity {d} after "
            f"{MAX_SHELL_ATTEMPTS} attempts (index {index})"
        )

    indexes = range(n)
    if workers <= 1 or n <= 1:
        return [draw(i) for i in indexes]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(draw, indexes))


def score_shell(
    model,
    base: Sample,
    shell: Sequence[ShellSample],
    class_threshold: float = 0.5,
) -> tuple[float, list[ShellSample]]:
    """Attach model scores and boundary-crossing flags; returns (base score, shell)."""
    scorer = _as_scorer(model)
    scores = np.asarray(scorer([base] + [s.sample for s in shell]), dtype=np.float64)
    base_score = float(scores[0])
    base_class = classify(base_score, class_threshold)
    scored = [
        replace(entry, score=float(score), crossed=classify(float(score), class_threshold) != base_class)
        for entry, score in zip(shell, scores[1:])
    ]
    return base_score, scored


def shell_to_csv_text(shell: Sequence[ShellSample], feature_names: Sequence[str]) -> str:
    """Long-format shell output: coordinates, similarity, score, crossed flag."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id", *feature_names, "similarity", "score", "crossed"])
    for entry in shell:
        cells = [entry.sample.id]
        for name in feature_names:
            value = entry.sample.features.get(name)
            cells.append("" if value is None else repr(float(value)))
        cells.append(repr(float(entry.similarity)))
        cells.append("" if entry.score is None else repr(float(entry.score)))
        cells.append("" if entry.crossed is None else ("1" if entry.crossed else "0"))
        writer.writerow(cells)
    return buf.getvalue()


@dataclass(frozen=True)
class RecourseReport:
    """Whether any shell sample flips the model's decision, and the cheapest one found.

    `max_score_rate` is the largest observed |score - base score| per unit of
    dissimilarity (1 - similarity) across the shell, a sensitivity diagnostic
    reported instead of asserting any fixed smoothness bound.
    """

    base_id: str
    base_score: float
    base_class: int
    class_threshold: float
    shell_size: int
    crossed_count: int
    recourse_found: bool
    best_id: str | None
    best_similarity: float | None
    best_score: float | None
    best_class: int | None
    deltas: dict[str, float] | None
    target_values: dict[str, float] | None
    max_score_rate: float | None
    message: str

    def to_json_dict(self) -> dict:
        return {
            "base_id": self.base_id,
            "base_score": self.base_score,
            "base_class": self.base_class,
            "class_threshold": self.class_threshold,
            "shell_size": self.shell_size,
            "crossed_count": self.crossed_count,
            "recourse_found": self.recourse_found,
            "best_id": self.best_id,
            "best_similarity": self.best_similarity,
            "best_score": self.best_score,
            "best_class": self.best_class,
            "deltas": self.deltas,
            "target_values": self.target_values,
            "max_score_rate": self.max_score_rate,
            "message": self.message,
        }


def _shell_scores(model_or_scores, base: Sample, shell: Sequence[ShellSample]) -> tuple[float, list[float]]:
    if isinstance(model_or_scores, ScoreFile) or isinstance(model_or_scores, Mapping):
        lookup = (
            model_or_scores.scores_by_id()
            if isinstance(model_or_scores, ScoreFile)
            else dict(model_or_scores)
        )
        wanted = [base.id] + [entry.sample.id for entry in shell]
        missing = [sample_id for sample_id in wanted if sample_id not in lookup]
        if missing:
            raise ProbeError(
                f"external scores missing {len(missing)} ids: {', '.join(missing[:5])}"
            )
        return float(lookup[base.id]), [float(lookup[entry.sample.id]) for entry in shell]
    scorer = _as_scorer(model_or_scores)
    scores = np.asarray(scorer([base] + [entry.sample for entry in shell]), dtype=np.float64)
    return float(scores[0]), [float(s) for s in scores[1:]]


def recourse_probe(
    model_or_scores,
    base: Sample,
    shell: Sequence[ShellSample],
    class_threshold: float = 0.5,
) -> RecourseReport:
    """Scan the shell for decision-boundary crossings.

    Accepts a model (anything scorable) or precomputed external scores that
    cover the base id and every shell id. If a crossing exists, the one with
    the highest similarity to the base wins (ties broken by id, so the result
    does not depend on shell ordering) and its per-feature deltas form the
    candidate recourse action list.
    """
    if not shell:
        raise ProbeError("recourse_probe needs a non-empty shell")
    base_score, scores = _shell_scores(model_or_scores, base, shell)
    base_class = classify(base_score, class_threshold)

    crossings: list[tuple[ShellSample, float]] = []
    max_rate: float | None = None
    for entry, score in zip(shell, scores):
        if entry.similarity < 1.0:
            rate = abs(score - base_score) / (1.0 - entry.similarity)
            if max_rate is None or rate > max_rate:
                max_rate = rate
        if classify(score, class_threshold) != base_class:
            crossings.append((entry, score))

    if not crossings:
        floor = min(entry.similarity for entry in shell)
        return RecourseReport(
            base_id=base.id,
            base_score=base_score,
            base_class=base_class,
            class_threshold=class_threshold,
            shell_size=len(shell),
            crossed_count=0,
            recourse_found=False,
            best_id=None,
            best_similarity=None,
            best_score=None,
            best_class=None,
            deltas=None,
            target_values=None,
            max_score_rate=max_rate,
            message=f"no recourse found within similarity >= {floor!r}",
        )

    best_entry, best_score = min(
        crossings, key=lambda pair: (-pair[0].similarity, pair[0].sample.id)
    )
    deltas: dict[str, float] = {}
    targets: dict[str, float] = {}
    for name, value in best_entry.sample.features.items():
        base_value = base.features.get(name)
        if base_value is None or value != base_value:
            deltas[name] = value - base_value if base_value is not None else value
            targets[name] = value
    return RecourseReport(
        base_id=base.id,
        base_score=base_score,
        base_class=base_class,
        class_threshold=class_threshold,
        shell_size=len(shell),
        crossed_count=len(crossings),
        recourse_found=True,
        best_id=best_entry.sample.id,
        best_similarity=best_entry.similarity,
        best_score=best_score,
        best_class=classify(best_score, class_threshold),
        deltas=deltas,
        target_values=targets,
        max_score_rate=max_rate,
        message=(
            f"recourse found: {len(crossings)} of {len(shell)} shell samples cross the "
            f"decision boundary; closest at similarity {best_entry.similarity!r}"
        ),
    )


def save_recourse_report(report: RecourseReport, path: str | Path) -> None:
    atomic_write_text(path, json.dumps(report.to_json_dict(), indent=2) + "\n")
