"""Classification metrics, ROC analysis and two-fold cross-validation."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .annotations import LabeledSeries
from .hmm import Grouping, HmmModel, Mode, forward_filter, group_scores, train
from .states import N_STATES, STATE_NAMES

logger = logging.getLogger(__name__)


class EvaluationError(ValueError):
    pass


# ---------------------------------------------------------------- confusion


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows = predicted class and columns = observed class."""

    counts: np.ndarray
    class_names: tuple[str, ...] = STATE_NAMES

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        k = len(self.class_names)
        if counts.shape != (k, k):
            raise ValueError(f"confusion counts must be {k}x{k}, got {counts.shape}")
        if np.any(counts < 0):
            raise ValueError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClassMetrics:
    sensitivity: np.ndarray
    specificity: np.ndarray
    accuracy: float
    class_names: tuple[str, ...] = STATE_NAMES

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "sensitivity": {c: _num(v) for c, v in zip(self.class_names, self.sensitivity)},
            "specificity": {c: _num(v) for c, v in zip(self.class_names, self.specificity)},
        }


@dataclass(frozen=True)
class BinaryMetrics:
    tp: int
    fp: int
    fn: int
    tn: int
    sensitivity: float
    specificity: float
    accuracy: float


def _class_index(values, class_names: Sequence[str]) -> np.ndarray:
    values = list(values)
    index = {name: i for i, name in enumerate(class_names)}
    out = np.empty(len(values), dtype=np.int64)
    for k, v in enumerate(values):
        if isinstance(v, str):
            out[k] = index[v]
        else:
            out[k] = int(v)
            if not 0 <= out[k] < len(class_names):
                raise ValueError(f"class index {v} out of range")
    return out


def confusion(predicted, observed, class_names: Sequence[str] = STATE_NAMES) -> ConfusionMatrix:
    pred = _class_index(predicted, class_names)
    obs = _class_index(observed, class_names)
    if pred.size != obs.size:
        raise EvaluationError(f"length mismatch: {pred.size} predicted vs {obs.size} observed")
    if pred.size == 0:
        raise EvaluationError("confusion matrix needs at least one bin")
    k = len(class_names)
    counts = np.bincount(pred * k + obs, minlength=k * k).reshape(k, k)
    return ConfusionMatrix(counts, tuple(class_names))


def class_metrics(m: ConfusionMatrix) -> ClassMetrics:
    """Per-class sensitivity and specificity plus overall accuracy.

    Sensitivity of a class never observed is NaN; so is specificity when
    every bin belongs to that class.
    """
    c = m.counts.astype(np.float64)
    total = c.sum()
    if total == 0:
        raise EvaluationError("empty confusion matrix")
    diag = np.diag(c)
    col = c.sum(axis=0)
    row = c.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        sens = np.where(col > 0, diag / col, np.nan)
        neg = total - col
        spec = np.where(neg > 0, (neg - row + diag) / neg, np.nan)
    return ClassMetrics(sens, spec, float(diag.sum() / total), m.class_names)


def binary_metrics(tp: int, fp: int, fn: int, tn: int) -> BinaryMetrics:
    total = tp + fp + fn + tn
    if total <= 0:
        raise EvaluationError("binary metrics need at least one case")
    sens = tp / (tp + fn) if tp + fn else math.nan
    spec = tn / (tn + fp) if tn + fp else math.nan
    return BinaryMetrics(int(tp), int(fp), int(fn), int(tn), sens, spec, (tp + tn) / total)


def threshold_counts(scores, truth, threshold: float) -> tuple[int, int, int, int]:
    """``(tp, fp, fn, tn)`` when bins scoring at least ``threshold`` are called positive."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=bool)
    call = scores >= threshold
    tp = int(np.sum(call & truth))
    fp = int(np.sum(call & ~truth))
    fn = int(np.sum(~call & truth))
    tn = int(np.sum(~call & ~truth))
    return tp, fp, fn, tn


# ---------------------------------------------------------------- ROC


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    positive_label: str = "positive"

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist(), self.thresholds.tolist()))


@dataclass(frozen=True)
class YoudenPoint:
    threshold: float
    sensitivity: float
    specificity: float
    j: float


def roc_binary(scores, truth, positive_label: str = "positive") -> RocCurve:
    """ROC over every distinct score used as a ``score >= threshold`` cutoff.

    The first point (threshold ``+inf``) is (0, 0); the lowest distinct
    score gives (1, 1).
    """
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=bool)
    if scores.shape != truth.shape or scores.ndim != 1:
        raise EvaluationError("scores and truth must be 1-D arrays of equal length")
    n_pos = int(truth.sum())
    n_neg = truth.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("ROC needs at least one positive and one negative example")
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    t = truth[order]
    last_of_value = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = np.cumsum(t)[last_of_value]
    fp = (last_of_value + 1) - tp
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    thresholds = np.r_[np.inf, s[last_of_value]]
    return RocCurve(fpr, tpr, thresholds, positive_label)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve."""
    dx = np.diff(curve.fpr)
    return float(np.sum(dx * (curve.tpr[1:] + curve.tpr[:-1]) / 2.0))


def youden_best(curve: RocCurve) -> YoudenPoint:
    """Point maximising ``TPR - FPR``; ties prefer higher TPR, then lower threshold."""
    j = curve.tpr - curve.fpr
    best = j.max()
    candidates = np.flatnonzero(j == best)
    k = min(candidates, key=lambda i: (-curve.tpr[i], curve.thresholds[i]))
    return YoudenPoint(float(curve.thresholds[k]), float(curve.tpr[k]), float(1.0 - curve.fpr[k]), float(j[k]))


@dataclass(frozen=True)
class PairRoc:
    first: str
    second: str
    curve: RocCurve  # first as positive
    curve_reverse: RocCurve  # second as positive
    auc: float


@dataclass(frozen=True)
class OvoResult:
    pairs: tuple[PairRoc, ...]
    macro_auc: float

    def pair_aucs(self) -> dict[str, float]:
        return {f"{p.first}-{p.second}": p.auc for p in self.pairs}


def roc_multiclass_ovo(posteriors, truth, class_names: Sequence[str] = STATE_NAMES) -> OvoResult:
    """One-vs-one ROC for every pair of classes present in ``truth``.

    On the bins of classes ``i`` and ``j`` the score for ``i`` is
    ``p_i / (p_i + p_j)``; the pair AUC averages both directions.
    """
    posteriors = np.asarray(posteriors, dtype=np.float64)
    truth = _class_index(truth, class_names)
    present = [k for k in range(len(class_names)) if np.any(truth == k)]
    if len(present) < 2:
        raise EvaluationError("one-vs-one ROC needs at least two classes present")
    pairs = []
    for i, j in itertools.combinations(present, 2):
        keep = (truth == i) | (truth == j)
        pi = posteriors[keep, i]
        pj = posteriors[keep, j]
        denom = pi + pj
        with np.errstate(divide="ignore", invalid="ignore"):
            score_i = np.where(denom > 0, pi / denom, 0.5)
            score_j = np.where(denom > 0, pj / denom, 0.5)
        is_i = truth[keep] == i
        c_ij = roc_binary(score_i, is_i, class_names[i])
        c_ji = roc_binary(score_j, ~is_i, class_names[j])
        pairs.append(PairRoc(class_names[i], class_names[j], c_ij, c_ji, (auc(c_ij) + auc(c_ji)) / 2.0))
    return OvoResult(tuple(pairs), float(np.mean([p.auc for p in pairs])))


# ---------------------------------------------------------------- cross-validation


@dataclass
class GroupedResult:
    grouping: Grouping
    curve: RocCurve
    auc: float
    youden: YoudenPoint
    at_youden: BinaryMetrics

    def as_dict(self) -> dict:
        m = self.at_youden
        return {
            "auc": self.auc,
            "youden": {
                "threshold": _num(self.youden.threshold),
                "j": self.youden.j,
                "sensitivity": _num(m.sensitivity),
                "specificity": _num(m.specificity),
                "accuracy": m.accuracy,
                "confusion": {"tp": m.tp, "fp": m.fp, "fn": m.fn, "tn": m.tn},
            },
        }


@dataclass
class SplitResult:
    """Metrics of one model on one set of recordings."""

    n_bins: int
    confusion: ConfusionMatrix
    metrics: ClassMetrics
    ovo: OvoResult | None
    grouped: dict[str, GroupedResult | None]

    def as_dict(self) -> dict:
        return {
            "n_bins": self.n_bins,
            "confusion": {
                "rows": "predicted",
                "columns": "observed",
                "classes": list(self.confusion.class_names),
                "counts": self.confusion.counts.tolist(),
            },
            **self.metrics.as_dict(),
            "ovo_macro_auc": self.ovo.macro_auc if self.ovo else None,
            "ovo_pair_auc": self.ovo.pair_aucs() if self.ovo else {},
            "grouped": {k: (g.as_dict() if g else None) for k, g in self.grouped.items()},
        }


@dataclass
class FoldResult:
    fold: int
    train_sources: list[str]
    test_sources: list[str]
    model: HmmModel
    train: SplitResult
    test: SplitResult


@dataclass
class EvalReport:
    mode: Mode
    folds: list[FoldResult]
    groupings: tuple[Grouping, ...]
    mean: dict = field(default_factory=dict)
    undefined: int = 0

    def as_dict(self) -> dict:
        return {
            "format": "coughhmm-eval-report",
            "version": 1,
            "mode": self.mode.value,
            "groupings": [g.value for g in self.groupings],
            "folds": [
                {
                    "fold": f.fold,
                    "train_sources": f.train_sources,
                    "test_sources": f.test_sources,
                    "train": f.train.as_dict(),
                    "test": f.test.as_dict(),
                }
                for f in self.folds
            ],
            "mean": self.mean,
            "undefined_values_excluded": self.undefined,
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.as_dict(), fh, indent=2, allow_nan=False)
            fh.write("\n")


def _num(x):
    """JSON-safe float: NaN and infinities become None."""
    x = float(x)
    return x if math.isfinite(x) else None


def split_folds(dataset: Sequence[LabeledSeries]) -> tuple[list[LabeledSeries], list[LabeledSeries]]:
    """Two folds balanced by bin count.

    Whole recordings are assigned greedily, longest first, to the lighter
    fold. A single recording is cut into two contiguous halves.
    """
    dataset = list(dataset)
    if not dataset:
        raise EvaluationError("empty dataset")
    if len(dataset) == 1:
        only = dataset[0]
        if len(only) < 2:
            raise EvaluationError("a single recording needs at least two bins to split")
        half = len(only) // 2
        first = only.slice(0, half)
        second = only.slice(half, len(only))
        return [first], [second]
    folds: tuple[list, list] = ([], [])
    loads = [0, 0]
    order = sorted(range(len(dataset)), key=lambda i: (-len(dataset[i]), i))
    for i in order:
        k = 0 if loads[0] <= loads[1] else 1
        folds[k].append(dataset[i])
        loads[k] += len(dataset[i])
    return folds


def _grouped(posteriors, labels, grouping: Grouping) -> GroupedResult | None:
    scores = group_scores(posteriors, grouping)
    truth = np.isin(labels, grouping.positive_states)
    try:
        curve = roc_binary(scores, truth, grouping.value)
    except EvaluationError:
        logger.warning("%s grouping: only one class present, ROC skipped", grouping.value)
        return None
    point = youden_best(curve)
    return GroupedResult(grouping, curve, auc(curve), point, binary_metrics(*threshold_counts(scores, truth, point.threshold)))


def evaluate(model: HmmModel, series: Sequence[LabeledSeries], groupings=tuple(Grouping)) -> SplitResult:
    """Filter every series with ``model`` and score the pooled bins."""
    posts = [forward_filter(model, ls.features).posteriors for ls in series]
    post = np.concatenate(posts)
    labels = np.concatenate([ls.labels for ls in series])
    cm = confusion(np.argmax(post, axis=1), labels)
    try:
        ovo = roc_multiclass_ovo(post, labels)
    except EvaluationError:
        ovo = None
    grouped = {Grouping(g).value: _grouped(post, labels, Grouping(g)) for g in groupings}
    return SplitResult(int(labels.size), cm, class_metrics(cm), ovo, grouped)


def _mean_of(values) -> tuple[float | None, int]:
    arr = np.array([np.nan if v is None else v for v in values], dtype=np.float64)
    bad = int(np.sum(~np.isfinite(arr)))
    if bad == arr.size:
        return None, bad
    return float(np.nanmean(arr)), bad


def _summarise(splits: list[SplitResult], groupings) -> tuple[dict, int]:
    undefined = 0

    def avg(values):
        nonlocal undefined
        mean, bad = _mean_of(values)
        undefined += bad
        return mean

    out = {
        "accuracy": avg([s.metrics.accuracy for s in splits]),
        "ovo_macro_auc": avg([s.ovo.macro_auc if s.ovo else None for s in splits]),
        "sensitivity": {c: avg([s.metrics.sensitivity[k] for s in splits]) for k, c in enumerate(STATE_NAMES)},
        "specificity": {c: avg([s.metrics.specificity[k] for s in splits]) for k, c in enumerate(STATE_NAMES)},
        "grouped": {},
    }
    for g in groupings:
        g = Grouping(g).value
        res = [s.grouped.get(g) for s in splits]
        out["grouped"][g] = {
            "auc": avg([r.auc if r else None for r in res]),
            "sensitivity": avg([r.at_youden.sensitivity if r else None for r in res]),
            "specificity": avg([r.at_youden.specificity if r else None for r in res]),
            "accuracy": avg([r.at_youden.accuracy if r else None for r in res]),
        }
    return out, undefined


def two_fold_cv(
    dataset: Sequence[LabeledSeries],
    mode: Mode | str = Mode.MULTIVARIATE,
    groupings: Sequence[Grouping | str] = tuple(Grouping),
    **train_kwargs,
) -> EvalReport:
    """Train on each fold, evaluate on the other, and average over folds.

    Posterior argmax (ties to the earlier state) gives the per-bin class.
    Per-class rates that are undefined in a fold are excluded from the
    means and counted in ``EvalReport.undefined``.
    """
    mode = Mode(mode)
    groupings = tuple(Grouping(g) for g in groupings)
    folds = split_folds(dataset)
    results = []
    for k in range(2):
        train_set, test_set = folds[1 - k], folds[k]
        model = train(train_set, mode, **train_kwargs)
        results.append(
            FoldResult(
                fold=k,
                train_sources=[ls.features.source_id for ls in train_set],
                test_sources=[ls.features.source_id for ls in test_set],
                model=model,
                train=evaluate(model, train_set, groupings),
                test=evaluate(model, test_set, groupings),
            )
        )
    test_mean, undef_test = _summarise([f.test for f in results], groupings)
    train_mean, undef_train = _summarise([f.train for f in results], groupings)
    return EvalReport(mode, results, groupings, {"test": test_mean, "train": train_mean}, undef_test + undef_train)


# ---------------------------------------------------------------- output


def write_roc_csv(curve: RocCurve, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["fpr", "tpr", "threshold"])
        for f, t, th in curve.points:
            writer.writerow([repr(f), repr(t), repr(th)])


def _fmt(x, width=8, digits=4) -> str:
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return "n/a".rjust(width)
    return f"{x:{width}.{digits}f}"


def format_confusion(cm: ConfusionMatrix, metrics: ClassMetrics | None = None) -> str:
    metrics = metrics or class_metrics(cm)
    names = cm.class_names
    lines = ["predicted \\ observed " + "".join(n.rjust(8) for n in names)]
    for i, n in enumerate(names):
        lines.append(f"{n:<21}" + "".join(f"{v:8d}" for v in cm.counts[i]))
    lines.append(f"{'sensitivity':<21}" + "".join(_fmt(v) for v in metrics.sensitivity))
    lines.append(f"{'specificity':<21}" + "".join(_fmt(v) for v in metrics.specificity))
    lines.append(f"{'accuracy':<21}{_fmt(metrics.accuracy)}")
    return "\n".join(lines)


def format_report(report: EvalReport) -> str:
    out = [f"Two-fold cross-validation, {report.mode.value} emissions", ""]
    for f in report.folds:
        out.append(f"Fold {f.fold}: train {f.train.n_bins} bins, test {f.test.n_bins} bins")
        out.append(format_confusion(f.test.confusion, f.test.metrics))
        out.append(
            f"one-vs-one macro AUC  train {_fmt(f.train.ovo.macro_auc if f.train.ovo else None)}"
            f"  test {_fmt(f.test.ovo.macro_auc if f.test.ovo else None)}"
        )
        for name, g in f.test.grouped.items():
            if g is None:
                out.append(f"{name}: not computable (single class)")
                continue
            m = g.at_youden
            out.append(
                f"{name:<9} AUC {g.auc:.4f}  Youden threshold {g.youden.threshold:.6g}  "
                f"TP {m.tp} FP {m.fp} FN {m.fn} TN {m.tn}  "
                f"sens {m.sensitivity:.0%} spec {m.specificity:.0%} acc {m.accuracy:.0%}"
            )
        out.append("")
    mean = report.mean["test"]
    out.append("Mean over folds (test)")
    out.append(f"accuracy {_fmt(mean['accuracy'])}   one-vs-one macro AUC {_fmt(mean['ovo_macro_auc'])}")
    for name, g in mean["grouped"].items():
        out.append(
            f"{name:<9} AUC {_fmt(g['auc'])}  sens {_fmt(g['sensitivity'])}  "
            f"spec {_fmt(g['specificity'])}  acc {_fmt(g['accuracy'])}"
        )
    if report.undefined:
        out.append(f"* {report.undefined} undefined value(s) excluded from means")
    return "\n".join(out) + "\n"
