"""Condition-level accuracies, training trajectories, and learning phases.

Disaggregates score records into per-group accuracy cells with seeded
percentile-bootstrap confidence intervals, assembles per-condition
trajectories over training steps, detects change points by binary
segmentation under a binomial likelihood, and labels the segments with
the best-aligned heuristic (unigram, bigram, trigram, longer-context,
or the grammatical rule itself).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .scoring import Aggregation, ScoreRecord
from .stimuli import StimulusItem

#: Dimensions usable in disaggregation. The first three live on the
#: stimulus item (records carry only item_id), the rest on the record.
ITEM_DIMENSIONS = ("condition", "structure", "verb_lemma")
RECORD_DIMENSIONS = ("verb_class", "family", "model", "size", "seed", "step", "order")
DIMENSIONS = ITEM_DIMENSIONS + RECORD_DIMENSIONS

#: Reserved condition labels for the two whole-set summaries.
AGGREGATE_LABEL = "aggregate"
POOLED_LABEL = "pooled"


@dataclass(frozen=True)
class AccuracyCell:
    group: dict
    n: int
    accuracy: float
    ci_low: float
    ci_high: float

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("cell must cover at least one record")
        if not self.ci_low <= self.accuracy <= self.ci_high:
            raise ValueError(
                f"CI [{self.ci_low}, {self.ci_high}] does not bracket accuracy {self.accuracy}"
            )


@dataclass(frozen=True)
class TrajectoryPoint:
    step: int
    cell: AccuracyCell


@dataclass(frozen=True)
class TrajectorySeries:
    key: dict
    condition: str
    points: tuple[TrajectoryPoint, ...]

    def __post_init__(self):
        steps = [p.step for p in self.points]
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise ValueError("steps must be strictly increasing")

    @property
    def steps(self) -> list[int]:
        return [p.step for p in self.points]


class PhaseLabel(Enum):
    # declaration order is the tie-break order (lower order wins)
    UNIGRAM = "unigram"
    BIGRAM = "bigram"
    TRIGRAM = "trigram"
    LONGER_CONTEXT = "longer_context"
    GRAMMAR = "grammar"


def label_for_order(order: int) -> PhaseLabel:
    """Heuristic label for an n-gram oracle order."""
    if order < 1:
        raise ValueError(f"order must be >= 1, got {order}")
    return {1: PhaseLabel.UNIGRAM, 2: PhaseLabel.BIGRAM, 3: PhaseLabel.TRIGRAM}.get(
        order, PhaseLabel.LONGER_CONTEXT
    )


@dataclass(frozen=True)
class PhaseSegment:
    start_step: int
    end_step: int
    label: PhaseLabel
    alignment: dict

    def __post_init__(self):
        if self.start_step > self.end_step:
            raise ValueError("start_step must be <= end_step")


# ---------------------------------------------------------------------------
# Bootstrap confidence intervals
# ---------------------------------------------------------------------------


def bootstrap_ci(
    outcomes: Sequence[bool], resamples: int, alpha: float, seed: int = 0
) -> tuple[float, float]:
    """Seeded percentile bootstrap over item resampling.

    Returns the (alpha/2, 1 - alpha/2) percentiles of the resampled
    accuracies; deterministic for a fixed seed.
    """
    if len(outcomes) == 0:
        raise ValueError("outcomes must be nonempty")
    if resamples < 1:
        raise ValueError("resamples must be >= 1")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    arr = np.asarray(outcomes, dtype=float)
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, arr.size, size=(resamples, arr.size))
    means = arr[idx].mean(axis=1)
    return float(np.quantile(means, alpha / 2)), float(np.quantile(means, 1 - alpha / 2))


def _cell_seed(base_seed: int, group_key: str) -> int:
    """Deterministic per-cell seed, independent of cell iteration order."""
    digest = hashlib.sha256(f"{base_seed}|{group_key}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _make_cell(
    group: dict, outcomes: Sequence[bool], resamples: int, alpha: float, base_seed: int
) -> AccuracyCell:
    n = len(outcomes)
    accuracy = sum(outcomes) / n
    key = json.dumps(group, sort_keys=True, default=str)
    low, high = bootstrap_ci(outcomes, resamples, alpha, seed=_cell_seed(base_seed, key))
    # percentile bounds can miss the point estimate at tiny B; widen so the
    # cell invariant (ci_low <= accuracy <= ci_high) always holds
    return AccuracyCell(
        group=group, n=n, accuracy=accuracy, ci_low=min(low, accuracy), ci_high=max(high, accuracy)
    )


# ---------------------------------------------------------------------------
# Disaggregation
# ---------------------------------------------------------------------------


def _decision(record: ScoreRecord, aggregation: Aggregation) -> bool:
    return record.decision_sum if aggregation is Aggregation.SUM else record.decision_mean


def _dim_value(dim: str, record: ScoreRecord, item: StimulusItem | None):
    if dim == "condition":
        return item.condition.label
    if dim == "structure":
        return item.condition.structure.value
    if dim == "verb_lemma":
        return item.verb_lemma
    if dim == "verb_class":
        return record.verb_class.value
    if dim == "family":
        return record.scorer.family.value
    if dim == "model":
        return record.scorer.model_name
    if dim == "size":
        return record.scorer.size_label
    if dim == "seed":
        return record.scorer.seed
    if dim == "step":
        return record.scorer.step
    if dim == "order":
        return record.scorer.order
    raise ValueError(f"unknown dimension {dim!r}")


def disaggregate(
    records: Sequence[ScoreRecord],
    dims: Sequence[str],
    aggregation: Aggregation = Aggregation.SUM,
    items: Mapping[str, StimulusItem] | None = None,
    *,
    resamples: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
) -> list[AccuracyCell]:
    """One accuracy cell per observed dimension-value combination.

    Cells partition the records (every record lands in exactly one).
    Item-side dimensions (condition, structure, verb_lemma) require the
    items mapping for the join on item_id.
    """
    if not dims:
        raise ValueError("dims must be nonempty")
    unknown = [d for d in dims if d not in DIMENSIONS]
    if unknown:
        raise ValueError(f"unknown dimension(s): {', '.join(unknown)}")
    needs_items = any(d in ITEM_DIMENSIONS for d in dims)
    if needs_items and items is None:
        raise ValueError("item-side dims require the items mapping")

    groups: dict[tuple, list[bool]] = {}
    for record in records:
        item = None
        if needs_items:
            item = items.get(record.item_id)
            if item is None:
                raise KeyError(f"record references unknown item {record.item_id}")
        key = tuple(_dim_value(d, record, item) for d in dims)
        groups.setdefault(key, []).append(_decision(record, aggregation))

    cells = []
    for key in sorted(groups, key=lambda k: tuple(str(v) for v in k)):
        group = dict(zip(dims, key))
        cells.append(_make_cell(group, groups[key], resamples, alpha, seed))
    return cells


def aggregate_score(cells: Sequence[AccuracyCell], expected_conditions: Sequence[str] | None = None) -> float:
    """Unweighted arithmetic mean of per-condition accuracies (the black
    "aggregate" line in the report figure), never item-weighted."""
    conditions = []
    for cell in cells:
        if "condition" not in cell.group:
            raise ValueError("aggregate_score needs condition-grouped cells")
        conditions.append(cell.group["condition"])
    if len(set(conditions)) != len(conditions):
        raise ValueError(f"duplicate condition in cells: {conditions}")
    if expected_conditions is not None and set(conditions) != set(expected_conditions):
        raise ValueError(f"conditions {sorted(conditions)} != expected {sorted(expected_conditions)}")
    if not cells:
        raise ValueError("no cells")
    return math.fsum(c.accuracy for c in cells) / len(cells)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------


def build_trajectory(
    records: Sequence[ScoreRecord],
    items: Mapping[str, StimulusItem],
    *,
    pool_seeds: bool = False,
    resamples: int = 1000,
    alpha: float = 0.05,
    seed: int = 0,
) -> list[TrajectorySeries]:
    """One series per (scorer grouping key x condition), points sorted by
    step. Missing steps are simply absent. Pooling seeds concatenates
    item outcomes across seeds (n adds up) instead of averaging."""
    key_dims = ["family", "model", "size"] + ([] if pool_seeds else ["seed"])
    grouped: dict[tuple, dict[str, dict[int, list[bool]]]] = {}
    for record in records:
        if record.scorer.step is None:
            raise ValueError(f"record for item {record.item_id} has no training step")
        item = items.get(record.item_id)
        if item is None:
            raise KeyError(f"record references unknown item {record.item_id}")
        key = tuple(_dim_value(d, record, item) for d in key_dims)
        condition = item.condition.label
        per_key = grouped.setdefault(key, {})
        per_cond = per_key.setdefault(condition, {})
        per_cond.setdefault(record.scorer.step, []).append(_decision(record, Aggregation.SUM))

    series = []
    for key in sorted(grouped, key=lambda k: tuple(str(v) for v in k)):
        key_map = dict(zip(key_dims, key))
        for condition in sorted(grouped[key]):
            points = []
            for step in sorted(grouped[key][condition]):
                group = dict(key_map, condition=condition, step=step)
                cell = _make_cell(group, grouped[key][condition][step], resamples, alpha, seed)
                points.append(TrajectoryPoint(step=step, cell=cell))
            series.append(TrajectorySeries(key=key_map, condition=condition, points=tuple(points)))
    return series


def aggregate_trajectory(series: Sequence[TrajectorySeries]) -> TrajectorySeries:
    """The unweighted mean across conditions at each step shared by all
    condition series (the canonical aggregate; CI degenerate)."""
    if not series:
        raise ValueError("no series")
    shared_steps = set(series[0].steps)
    for s in series[1:]:
        shared_steps &= set(s.steps)
    by_step = {s.condition: {p.step: p.cell for p in s.points} for s in series}
    points = []
    for step in sorted(shared_steps):
        cells = [by_step[cond][step] for cond in by_step]
        value = math.fsum(c.accuracy for c in cells) / len(cells)
        n = sum(c.n for c in cells)
        group = dict(series[0].key, condition=AGGREGATE_LABEL, step=step)
        points.append(
            TrajectoryPoint(step, AccuracyCell(group=group, n=n, accuracy=value, ci_low=value, ci_high=value))
        )
    return TrajectorySeries(key=dict(series[0].key), condition=AGGREGATE_LABEL, points=tuple(points))


def pooled_trajectory(
    series: Sequence[TrajectorySeries], *, resamples: int = 1000, alpha: float = 0.05, seed: int = 0
) -> TrajectorySeries:
    """Item-pooled accuracy at each shared step (emitted alongside the
    aggregate; the binomially meaningful whole-set series)."""
    if not series:
        raise ValueError("no series")
    shared_steps = set(series[0].steps)
    for s in series[1:]:
        shared_steps &= set(s.steps)
    by_step = {s.condition: {p.step: p.cell for p in s.points} for s in series}
    points = []
    for step in sorted(shared_steps):
        cells = [by_step[cond][step] for cond in by_step]
        n = sum(c.n for c in cells)
        k = sum(round(c.accuracy * c.n) for c in cells)
        outcomes = [True] * k + [False] * (n - k)
        group = dict(series[0].key, condition=POOLED_LABEL, step=step)
        points.append(TrajectoryPoint(step, _make_cell(group, outcomes, resamples, alpha, seed)))
    return TrajectorySeries(key=dict(series[0].key), condition=POOLED_LABEL, points=tuple(points))


# ---------------------------------------------------------------------------
# Change-point detection: binary segmentation, binomial log-likelihood
# ---------------------------------------------------------------------------


def _segment_loglik(k: Sequence[int], n: Sequence[int], lo: int, hi: int) -> float:
    """Binomial log-likelihood of points[lo:hi] under their pooled MLE rate."""
    total_k = sum(k[lo:hi])
    total_n = sum(n[lo:hi])
    ll = 0.0
    if 0 < total_k:
        ll += total_k * math.log(total_k / total_n)
    if total_k < total_n:
        ll += (total_n - total_k) * math.log((total_n - total_k) / total_n)
    return ll


def detect_changepoints(series: TrajectorySeries, min_segment: int = 2, penalty: float | None = None) -> list[int]:
    """Breakpoint steps found by binary segmentation.

    Each candidate split is scored by the gain in binomial log-likelihood
    over the unsplit segment and accepted only if the gain exceeds the
    penalty (default: ln(number of points), BIC-like). Every resulting
    segment keeps at least min_segment points. A breakpoint is reported
    as the step of the first point of the right-hand segment.

    Parameters
    ----------
    series : TrajectorySeries
        Accuracy trajectory; cells supply the per-step counts.
    min_segment : int
        Minimum points per segment.
    penalty : float, optional
        Log-likelihood gain required to accept a split.
    """
    points = series.points
    if min_segment < 1:
        raise ValueError("min_segment must be >= 1")
    if len(points) < 2 * min_segment:
        raise ValueError(f"series too short: {len(points)} points < 2 * min_segment")
    if penalty is None:
        penalty = math.log(len(points))
    k = [round(p.cell.accuracy * p.cell.n) for p in points]
    n = [p.cell.n for p in points]

    breaks: list[int] = []

    def split(lo: int, hi: int) -> None:
        if hi - lo < 2 * min_segment:
            return
        base = _segment_loglik(k, n, lo, hi)
        best_gain = -math.inf
        best_i = -1
        for i in range(lo + min_segment, hi - min_segment + 1):
            gain = _segment_loglik(k, n, lo, i) + _segment_loglik(k, n, i, hi) - base
            if gain > best_gain:
                best_gain = gain
                best_i = i
        if best_gain > penalty:
            breaks.append(best_i)
            split(lo, best_i)
            split(best_i, hi)

    split(0, len(points))
    return sorted(points[i].step for i in breaks)


# ---------------------------------------------------------------------------
# Heuristic alignment and phase labeling
# ---------------------------------------------------------------------------


def heuristic_alignment(
    model_records: Sequence[ScoreRecord],
    oracle_records: Sequence[ScoreRecord],
    aggregation: Aggregation = Aggregation.SUM,
) -> float:
    """Fraction of items on which the two scorers' decision bits agree.

    Symmetric and order-invariant; both sides must cover the same items.
    """
    model = {r.item_id: _decision(r, aggregation) for r in model_records}
    oracle = {r.item_id: _decision(r, aggregation) for r in oracle_records}
    if len(model) != len(model_records) or len(oracle) != len(oracle_records):
        raise ValueError("duplicate item ids in a record list")
    if model.keys() != oracle.keys():
        raise ValueError("item-id mismatch between the two record lists")
    if not model:
        raise ValueError("no records")
    agree = sum(1 for item_id, bit in model.items() if bit == oracle[item_id])
    return agree / len(model)


def label_phases(
    alignments: Mapping[PhaseLabel, Mapping[int, float]], breakpoints: Sequence[int]
) -> list[PhaseSegment]:
    """Segments bounded by consecutive breakpoints, each labeled with the
    argmax of mean alignment within it; ties break toward the lower-order
    heuristic (enum declaration order)."""
    if not alignments:
        raise ValueError("no alignment trajectories")
    labels = [label for label in PhaseLabel if label in alignments]
    steps = sorted(alignments[labels[0]].keys())
    if not steps:
        raise ValueError("empty alignment trajectory")
    for label in labels:
        if sorted(alignments[label].keys()) != steps:
            raise ValueError(f"alignment for {label.value} missing at some steps")
    for bp in breakpoints:
        if bp not in steps or bp == steps[0]:
            raise ValueError(f"breakpoint {bp} is not an interior step")
    bounds = [steps[0], *sorted(breakpoints), steps[-1] + 1]

    segments = []
    for lo, hi in zip(bounds, bounds[1:]):
        seg_steps = [s for s in steps if lo <= s < hi]
        means = {
            label: math.fsum(alignments[label][s] for s in seg_steps) / len(seg_steps)
            for label in labels
        }
        best = labels[0]
        for label in labels[1:]:
            if means[label] > means[best]:
                best = label
        segments.append(
            PhaseSegment(
                start_step=seg_steps[0],
                end_step=seg_steps[-1],
                label=best,
                alignment={label.value: means[label] for label in labels},
            )
        )
    return segments


# ---------------------------------------------------------------------------
# Output writers
# ---------------------------------------------------------------------------


def write_accuracy_csv(cells: Sequence[AccuracyCell], dims: Sequence[str], path, method: Mapping) -> None:
    """CSV with the group-key columns then n,accuracy,ci_low,ci_high; the
    method metadata rides in a single leading comment line."""
    lines = ["# method: " + json.dumps(dict(method), sort_keys=True)]
    lines.append(",".join([*dims, "n", "accuracy", "ci_low", "ci_high"]))
    for cell in cells:
        values = ["" if cell.group.get(d) is None else str(cell.group[d]) for d in dims]
        values += [str(cell.n), repr(cell.accuracy), repr(cell.ci_low), repr(cell.ci_high)]
        lines.append(",".join(values))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_phases_json(
    segments: Sequence[PhaseSegment], breakpoints: Sequence[int], path, method: Mapping
) -> None:
    doc = {
        "method": dict(method),
        "breakpoints": list(breakpoints),
        "segments": [
            {
                "start_step": s.start_step,
                "end_step": s.end_step,
                "label": s.label.value,
                "alignment": s.alignment,
            }
            for s in segments
        ],
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_phases_json(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
