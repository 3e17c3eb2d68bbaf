"""Predictive-bias metrics: KL divergence, PDC, accuracy and group accuracy.

PDC is the KL divergence from the target label distribution to the
distribution of prediction counts, divided by the KL divergence from the
target to the training label distribution (plus a small epsilon).  Lower
is better; 0 means predictions are spread exactly like the test labels,
1 means the model predicts with the same skew as its training data.

KL is the plain natural-log divergence.  A constant prefactor on both KL
terms (e.g. 1/C) cancels in the ratio, so none is applied.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .distributions import (
    ClassDistribution,
    ConfusionMatrix,
    GroupSpec,
    as_distribution,
    normalize,
    predicted_marginal,
    true_marginal,
)
from .errors import ConsistencyError, LTPDCError

EPSILON = 1e-6
_SERIES_TERMS = 20  # r - log1p(r) = sum_{k>=2} (-r)^k / k, truncated; exact to ~1e-20 for |r| <= 0.1
DEFAULT_ALPHA = 0.5


def _probs(d) -> np.ndarray:
    d = as_distribution(d)
    return d.mass if d.normalized else normalize(d).mass


def kl_divergence(p, q) -> float:
    """KL(p || q) in nats.  Terms with p_i = 0 contribute nothing."""
    p, q = _probs(p), _probs(q)
    if p.shape != q.shape:
        raise ConsistencyError(f"dimension mismatch: {p.size} vs {q.size} classes")
    return _kl(p, q)


def _kl(p, q) -> float:
    support = p > 0
    if np.any(q[support] == 0):
        raise LTPDCError("absolute continuity violated: q is zero where p is positive")
    ps, qs = p[support], q[support]
    # sum p*log(p/q) = sum [(q - p) + p*log(p/q)] - sum (q - p).  Each bracket
    # equals p*(r - log1p(r)) >= 0 with r = (q - p)/p, so nearly equal
    # distributions do not lose their small divergence to cancellation.
    d = qs - ps
    r = d / ps
    near = np.abs(r) <= 0.1
    terms = np.empty_like(ps)
    rn = r[near]
    s = np.full_like(rn, 1.0 / _SERIES_TERMS)
    for k in range(_SERIES_TERMS - 1, 1, -1):
        s = s * -rn + 1.0 / k
    terms[near] = ps[near] * rn * rn * s
    far = ~near
    with np.errstate(over="ignore", divide="ignore"):
        lr = np.log(ps[far] / qs[far])
    bad = ~np.isfinite(lr)
    lr[bad] = np.log(ps[far][bad]) - np.log(qs[far][bad])
    terms[far] = d[far] + ps[far] * lr
    return max(math.fsum(terms) - math.fsum(d), 0.0)


def pdc(train_counts, predicted, target, epsilon: float = EPSILON) -> float:
    """Predictive Distribution Calibration.

    ``train_counts``, ``predicted`` and ``target`` may be raw counts or
    probabilities; each is normalized first.  ``predicted`` should already
    be smoothed if any class received zero predictions.
    """
    ps, ph, pt = _probs(train_counts), _probs(predicted), _probs(target)
    if not (ps.size == ph.size == pt.size):
        raise ConsistencyError(
            f"dimension mismatch: train {ps.size}, predicted {ph.size}, target {pt.size}"
        )
    if np.any((pt == 0) & ((ps > 0) | (ph > 0))):
        raise LTPDCError("target distribution has a zero entry where train/predicted mass is positive")
    return _kl(pt, ph) / (_kl(pt, ps) + epsilon)


def smooth_predictions(raw_counts, alpha: float = DEFAULT_ALPHA) -> ClassDistribution:
    """Additive smoothing: (n_i + alpha) / (N + C * alpha)."""
    if not alpha > 0:
        raise LTPDCError(f"smoothing alpha must be > 0, got {alpha}")
    n = np.asarray(raw_counts, dtype=np.float64)
    if n.sum() <= 0:
        raise LTPDCError("empty distribution")
    return normalize(n + alpha)


def top1_accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise LTPDCError("empty confusion matrix")
    return float(np.trace(cm.counts) / cm.total)


def per_class_recall(cm: ConfusionMatrix) -> np.ndarray:
    """Diagonal over row sums; NaN for classes absent from the evaluated set."""
    rows = cm.row_sums().astype(np.float64)
    diag = np.diag(cm.counts).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(rows > 0, diag / np.where(rows > 0, rows, 1), np.nan)


def group_accuracy(cm: ConfusionMatrix, train_counts, spec: GroupSpec = GroupSpec()):
    """Accuracy over samples whose true class falls in Many / Medium / Few.

    The prediction is the argmax over all classes (it is already baked into
    the confusion matrix).  A group with no evaluated samples is NaN.
    """
    groups = _groups_for(cm.num_classes, train_counts, spec)
    rows = cm.row_sums()
    diag = np.diag(cm.counts)
    out = []
    for g in range(3):
        m = groups == g
        n = rows[m].sum()
        out.append(float(diag[m].sum() / n) if n > 0 else math.nan)
    if all(math.isnan(v) for v in out):
        raise LTPDCError("all groups are empty")
    return tuple(out)


def restricted_group_accuracy(logits, labels, train_counts, spec: GroupSpec = GroupSpec()):
    """Group accuracy with the argmax taken only over classes inside the group.

    Literal reading of the group-accuracy formula: competitors outside the
    true class's group are ignored.  Needs full logits.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if z.ndim != 2 or z.shape[0] != y.size:
        raise ConsistencyError("logits must be (N, C) with one label per row")
    groups = _groups_for(z.shape[1], train_counts, spec)
    out = []
    for g in range(3):
        in_group = groups == g
        rows = in_group[y]
        if not rows.any():
            out.append(math.nan)
            continue
        masked = np.where(in_group[None, :], z[rows], -np.inf)
        out.append(float(np.mean(np.argmax(masked, axis=1) == y[rows])))
    if all(math.isnan(v) for v in out):
        raise LTPDCError("all groups are empty")
    return tuple(out)


def _groups_for(num_classes, train_counts, spec):
    train_counts = as_distribution(train_counts)
    if train_counts.num_classes != num_classes:
        raise ConsistencyError(
            f"train counts cover {train_counts.num_classes} classes, predictions {num_classes}"
        )
    return spec.assign(train_counts)


def pdc_variance(pdcs: Sequence[float]) -> float:
    """Sample variance (n - 1 divisor) of PDC values across imbalance factors."""
    x = [float(v) for v in pdcs]
    if len(x) < 2:
        raise LTPDCError("pdc_variance needs at least 2 values")
    return statistics.variance(x)


@dataclass(frozen=True)
class MetricsReport:
    top1_acc: float
    group_acc: tuple
    per_class_recall: tuple
    kl_pred_target: float
    kl_train_target: float
    pdc: float
    predicted_counts: tuple
    epsilon: float = EPSILON
    alpha: float = DEFAULT_ALPHA
    group_spec: GroupSpec = field(default_factory=GroupSpec)
    group_mode: str = "all"

    def to_dict(self) -> dict:
        def nan_to_none(v):
            return None if isinstance(v, float) and math.isnan(v) else v

        return {
            "top1_acc": self.top1_acc,
            "group_acc": {
                "many": nan_to_none(self.group_acc[0]),
                "medium": nan_to_none(self.group_acc[1]),
                "few": nan_to_none(self.group_acc[2]),
            },
            "per_class_recall": [nan_to_none(v) for v in self.per_class_recall],
            "kl_pred_target": self.kl_pred_target,
            "kl_train_target": self.kl_train_target,
            "pdc": self.pdc,
            "predicted_counts": list(self.predicted_counts),
        }


def evaluate_confusion(
    cm: ConfusionMatrix,
    train_counts,
    *,
    alpha: float = DEFAULT_ALPHA,
    epsilon: float = EPSILON,
    group_spec: GroupSpec = GroupSpec(),
    target: Optional[ClassDistribution] = None,
    group_acc: Optional[tuple] = None,
) -> MetricsReport:
    """Compute every metric for one evaluation run.

    The target distribution defaults to the label distribution of the
    evaluated samples (uniform for a balanced test set).  Smoothing is
    applied to the prediction counts only.
    """
    train_counts = as_distribution(train_counts)
    if train_counts.num_classes != cm.num_classes:
        raise ConsistencyError(
            f"train counts cover {train_counts.num_classes} classes, predictions {cm.num_classes}"
        )
    target = true_marginal(cm) if target is None else as_distribution(target)
    predicted = smooth_predictions(cm.column_sums(), alpha)
    if np.any(_probs(target) == 0):
        raise LTPDCError("target distribution has a zero entry; every class needs test samples")
    kl_pred = kl_divergence(target, predicted)
    kl_train = kl_divergence(target, train_counts)
    mode = "all"
    if group_acc is None:
        group_acc = group_accuracy(cm, train_counts, group_spec)
    else:
        mode = "restricted"
    return MetricsReport(
        top1_acc=top1_accuracy(cm),
        group_acc=tuple(group_acc),
        per_class_recall=tuple(per_class_recall(cm).tolist()),
        kl_pred_target=kl_pred,
        kl_train_target=kl_train,
        pdc=kl_pred / (kl_train + epsilon),
        predicted_counts=tuple(int(v) for v in cm.column_sums()),
        epsilon=epsilon,
        alpha=alpha,
        group_spec=group_spec,
        group_mode=mode,
    )


__all__ = [
    "EPSILON",
    "DEFAULT_ALPHA",
    "kl_divergence",
    "pdc",
    "smooth_predictions",
    "top1_accuracy",
    "per_class_recall",
    "group_accuracy",
    "restricted_group_accuracy",
    "pdc_variance",
    "MetricsReport",
    "evaluate_confusion",
    "predicted_marginal",
]
