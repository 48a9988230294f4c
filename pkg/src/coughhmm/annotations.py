"""Interval annotations and their alignment to feature bins."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .features import FeatureSeries
from .states import COUGH_TOPOLOGY, STATE_NAMES, StateLabel, Topology, parse_state

logger = logging.getLogger(__name__)

LABEL_COLUMNS = ("start_s", "end_s", "state")


class LabelFormatError(ValueError):
    """Malformed, overlapping or otherwise invalid annotation file."""


@dataclass(frozen=True)
class LabelInterval:
    start_s: float
    end_s: float
    state: StateLabel

    def __post_init__(self):
        if not self.start_s < self.end_s:
            raise ValueError(f"interval start {self.start_s} must precede end {self.end_s}")
        object.__setattr__(self, "state", StateLabel(self.state))

    def contains(self, t: float) -> bool:
        return self.start_s <= t < self.end_s


@dataclass(frozen=True)
class LabeledSeries:
    features: FeatureSeries
    labels: np.ndarray

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int64)
        if labels.shape != (len(self.features),):
            raise ValueError(f"{labels.size} labels for {len(self.features)} bins")
        if labels.size and (labels.min() < 0 or labels.max() >= len(STATE_NAMES)):
            raise ValueError("labels must be state indices 0..4")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.labels.size

    def slice(self, start: int, stop: int) -> "LabeledSeries":
        return LabeledSeries(self.features.slice(start, stop), self.labels[start:stop])


def _check_overlaps(intervals: Sequence[LabelInterval], where: str = "") -> None:
    for prev, cur in zip(intervals, intervals[1:]):
        if cur.start_s < prev.end_s:
            raise LabelFormatError(
                f"{where}overlapping intervals [{prev.start_s}, {prev.end_s}) {prev.state.name} "
                f"and [{cur.start_s}, {cur.end_s}) {cur.state.name}"
            )


def load_labels(path) -> list[LabelInterval]:
    """Read a ``start_s,end_s,state`` CSV; returns intervals sorted by start."""
    path = os.fspath(path)
    intervals = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != LABEL_COLUMNS:
            raise LabelFormatError(f"{path}: expected header {','.join(LABEL_COLUMNS)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not field.strip() for field in row):
                continue
            if len(row) != 3:
                raise LabelFormatError(f"{path}: row {lineno}: expected 3 fields, got {len(row)}")
            try:
                intervals.append(LabelInterval(float(row[0]), float(row[1]), parse_state(row[2])))
            except ValueError as exc:
                raise LabelFormatError(f"{path}: row {lineno}: {exc}") from exc
    intervals.sort(key=lambda iv: iv.start_s)
    _check_overlaps(intervals, f"{path}: ")
    return intervals


def save_labels(intervals: Sequence[LabelInterval], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LABEL_COLUMNS)
        for iv in intervals:
            writer.writerow([repr(float(iv.start_s)), repr(float(iv.end_s)), iv.state.name])


def labels_to_intervals(labels, bin_duration_s: float) -> list[LabelInterval]:
    """Collapse per-bin labels into one interval per run, spanning whole bins."""
    labels = np.asarray(labels)
    intervals = []
    for start, stop, state in runs(labels):
        intervals.append(LabelInterval(start * bin_duration_s, stop * bin_duration_s, StateLabel(int(state))))
    return intervals


def align_labels(features: FeatureSeries, intervals: Sequence[LabelInterval]) -> LabeledSeries:
    """Label each bin with the interval containing its mid-point; E where none does."""
    intervals = sorted(intervals, key=lambda iv: iv.start_s)
    _check_overlaps(intervals)
    t_mid = features.t_mid_s
    labels = np.full(len(features), int(StateLabel.E), dtype=np.int64)
    for iv in intervals:
        labels[(t_mid >= iv.start_s) & (t_mid < iv.end_s)] = int(iv.state)
    violations = validate_labels(labels)
    if violations:
        logger.warning(
            "%s: %d forbidden transition(s) in annotations, first at bin %d",
            features.source_id or "series",
            len(violations),
            violations[0],
        )
    return LabeledSeries(features, labels)


def validate_labels(labels, topology: Topology = COUGH_TOPOLOGY) -> list[int]:
    """Indices ``i`` where ``labels[i] -> labels[i + 1]`` is not allowed."""
    labels = np.asarray([int(x) for x in labels], dtype=np.int64)
    if labels.size < 2:
        return []
    ok = topology.allowed[labels[:-1], labels[1:]]
    return [int(i) for i in np.flatnonzero(~ok)]


def runs(labels) -> list[tuple[int, int, int]]:
    """Maximal runs as ``(start, stop, state)`` with ``stop`` exclusive."""
    labels = np.asarray(labels)
    if labels.size == 0:
        return []
    change = np.flatnonzero(labels[1:] != labels[:-1]) + 1
    starts = np.concatenate(([0], change))
    stops = np.concatenate((change, [labels.size]))
    return [(int(a), int(b), int(labels[a])) for a, b in zip(starts, stops)]
