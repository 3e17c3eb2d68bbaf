"""Class distributions, prediction logs and confusion matrices.

Class indices are 0-based and, by convention, sorted by descending
training count so that index 0 is the head class.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence, Union

import numpy as np

from .errors import ConsistencyError, LTPDCError

NORMALIZATION_TOL = 1e-12


def _frozen(a) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ClassDistribution:
    """Nonnegative mass over C >= 2 classes, either raw counts or probabilities."""

    mass: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        m = np.asarray(self.mass, dtype=np.float64)
        if m.ndim != 1:
            raise LTPDCError(f"class distribution must be 1-D, got shape {m.shape}")
        if m.size < 2:
            raise LTPDCError(f"class distribution needs at least 2 classes, got {m.size}")
        if not np.all(np.isfinite(m)):
            raise LTPDCError("class distribution has non-finite entries")
        if np.any(m < 0):
            raise LTPDCError("class distribution has negative entries")
        if self.normalized and abs(m.sum() - 1.0) > NORMALIZATION_TOL:
            raise LTPDCError(f"normalized distribution sums to {m.sum()!r}, not 1")
        object.__setattr__(self, "mass", _frozen(m))

    @classmethod
    def uniform(cls, num_classes: int) -> "ClassDistribution":
        return cls(np.full(num_classes, 1.0 / num_classes), normalized=True)

    @property
    def num_classes(self) -> int:
        return self.mass.size

    @property
    def total(self) -> float:
        return float(self.mass.sum())

    def probabilities(self) -> np.ndarray:
        """Mass as a probability vector (normalizing if needed)."""
        return self.mass if self.normalized else normalize(self).mass

    def __len__(self):
        return self.mass.size

    def __iter__(self):
        return iter(self.mass.tolist())

    def __repr__(self):
        kind = "probs" if self.normalized else "counts"
        return f"ClassDistribution({kind}={self.mass.tolist()!r})"


def as_distribution(x) -> ClassDistribution:
    if isinstance(x, ClassDistribution):
        return x
    return ClassDistribution(np.asarray(x, dtype=np.float64))


def normalize(counts) -> ClassDistribution:
    counts = as_distribution(counts)
    s = counts.mass.sum()
    if s <= 0:
        raise LTPDCError("empty distribution")
    p = counts.mass / s
    # renormalize once more so the sum lands within the 1e-12 contract
    p = p / p.sum()
    return ClassDistribution(p, normalized=True)


Predicted = Union[int, Sequence[float], np.ndarray]


@dataclass(frozen=True)
class PredictionRecord:
    sample_id: Hashable
    true_label: int
    predicted: Predicted

    @property
    def has_logits(self) -> bool:
        return not isinstance(self.predicted, (int, np.integer))

    def predicted_label(self) -> int:
        if self.has_logits:
            return argmax(self.predicted)
        return int(self.predicted)


def argmax(logits) -> int:
    """Index of the largest logit; ties go to the lowest index."""
    z = np.asarray(logits, dtype=np.float64)
    # np.argmax already returns the first occurrence of the maximum
    return int(np.argmax(z))


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """C x C counts; rows are ground truth, columns are predicted labels."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise LTPDCError(f"confusion matrix must be square, got shape {c.shape}")
        if c.shape[0] < 2:
            raise LTPDCError("confusion matrix needs at least 2 classes")
        if not np.issubdtype(c.dtype, np.integer):
            if not np.all(np.isfinite(c)) or np.any(c != np.round(c)):
                raise LTPDCError("confusion matrix entries must be integers")
        c = c.astype(np.int64)
        if np.any(c < 0):
            raise LTPDCError("confusion matrix has negative entries")
        object.__setattr__(self, "counts", _frozen(c))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def row_sums(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def column_sums(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def __eq__(self, other):
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)

    __hash__ = None


@dataclass(frozen=True)
class GroupSpec:
    """Many/Medium/Few split by training count.

    Many: count > many_min.  Few: count < few_max.  Medium: everything else.
    """

    many_min: int = 100
    few_max: int = 20

    def __post_init__(self):
        if not (self.many_min > self.few_max >= 1):
            raise LTPDCError(
                f"group thresholds need many_min > few_max >= 1, got {self.many_min}, {self.few_max}"
            )

    def assign(self, train_counts) -> np.ndarray:
        """Group id per class: 0 = Many, 1 = Medium, 2 = Few."""
        n = as_distribution(train_counts).mass
        groups = np.ones(n.size, dtype=np.int64)
        groups[n > self.many_min] = 0
        groups[n < self.few_max] = 2
        return groups


GROUP_NAMES = ("many", "medium", "few")


def confusion_from_labels(true_labels, predicted_labels, num_classes: int) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=np.int64).ravel()
    p = np.asarray(predicted_labels, dtype=np.int64).ravel()
    if t.shape != p.shape:
        raise ConsistencyError("true and predicted label arrays differ in length")
    for name, arr in (("true", t), ("predicted", p)):
        bad = np.flatnonzero((arr < 0) | (arr >= num_classes))
        if bad.size:
            raise ConsistencyError(
                f"{name} label {arr[bad[0]]} at position {bad[0]} outside [0, {num_classes})"
            )
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


def confusion_from_log(log: Iterable[PredictionRecord], num_classes: int) -> ConfusionMatrix:
    """Tally a prediction log; logit records are reduced by argmax (ties -> lowest index)."""
    true, pred = [], []
    for rec in log:
        if not 0 <= rec.true_label < num_classes:
            raise ConsistencyError(
                f"sample {rec.sample_id!r}: true label {rec.true_label} outside [0, {num_classes})"
            )
        if rec.has_logits:
            if len(rec.predicted) != num_classes:
                raise ConsistencyError(
                    f"sample {rec.sample_id!r}: {len(rec.predicted)} logits for {num_classes} classes"
                )
            label = argmax(rec.predicted)
        else:
            label = int(rec.predicted)
            if not 0 <= label < num_classes:
                raise ConsistencyError(
                    f"sample {rec.sample_id!r}: predicted label {label} outside [0, {num_classes})"
                )
        true.append(rec.true_label)
        pred.append(label)
    return confusion_from_labels(true, pred, num_classes)


def predicted_marginal(cm: ConfusionMatrix) -> ClassDistribution:
    """Share of predictions per class (column sums, normalized)."""
    if cm.total == 0:
        raise LTPDCError("empty confusion matrix")
    return normalize(cm.column_sums())


def true_marginal(cm: ConfusionMatrix) -> ClassDistribution:
    """Share of evaluated samples per ground-truth class (row sums, normalized)."""
    if cm.total == 0:
        raise LTPDCError("empty confusion matrix")
    return normalize(cm.row_sums())
