"""Desk-scale linear softmax classifier trained by plain gradient descent.

Used to check, on synthetic long-tailed data, that the loss families order
the same way by PDC as they do on real benchmarks (plain CE most biased,
prior-adjusted CE least).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .distributions import GroupSpec, PredictionRecord, confusion_from_labels, normalize
from .errors import LTPDCError
from .losses import LossSpec, logit_adjust_inference
from .ltdata import SyntheticDataset, exp_profile, flat_profile, synth_gaussian_mixture
from .metrics import DEFAULT_ALPHA, EPSILON, MetricsReport, evaluate_confusion, pdc_variance

log = logging.getLogger(__name__)

MAX_EPOCHS = 100_000


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray  # (C, d)
    bias: np.ndarray  # (C,)
    loss_history: tuple = ()

    def logits(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.weights.shape[1]:
            raise LTPDCError(
                f"features of shape {x.shape} do not match model input dimension {self.weights.shape[1]}"
            )
        return x @ self.weights.T + self.bias


@dataclass(frozen=True)
class TrainConfig:
    loss: LossSpec = field(default_factory=LossSpec)
    epochs: int = 500
    learning_rate: float = 0.5
    batch_size: Optional[int] = None  # None = full batch
    seed: int = 0
    weight_decay: float = 0.0

    def __post_init__(self):
        if not 1 <= self.epochs <= MAX_EPOCHS:
            raise LTPDCError(f"epochs must be in [1, {MAX_EPOCHS}], got {self.epochs}")
        if not self.learning_rate > 0:
            raise LTPDCError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise LTPDCError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.batch_size is not None and self.batch_size < 1:
            raise LTPDCError(f"batch_size must be >= 1, got {self.batch_size}")


def train(data: SyntheticDataset, cfg: TrainConfig) -> LinearModel:
    """Gradient descent on mean loss + weight_decay/2 * ||W||^2, starting from zeros."""
    x, y = data.features, data.labels
    if y.size == 0:
        raise LTPDCError("empty training set")
    C, d = data.num_classes, x.shape[1]
    loss_fn = cfg.loss.bind(data.class_counts())
    W = np.zeros((C, d))
    b = np.zeros(C)
    rng = np.random.default_rng(cfg.seed)
    history = []
    n = y.size
    bs = n if cfg.batch_size is None else min(cfg.batch_size, n)
    # divergence is detected explicitly below, so silence numpy's overflow chatter
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(cfg.epochs):
            order = np.arange(n) if bs == n else rng.permutation(n)
            total = 0.0
            for start in range(0, n, bs):
                idx = order[start:start + bs]
                xb = x[idx]
                z = xb @ W.T + b
                if not np.all(np.isfinite(z)):
                    raise LTPDCError(f"training diverged at epoch {epoch}: non-finite logits")
                out = loss_fn(z, y[idx])
                m = idx.size
                total += float(np.sum(out.value))
                gW = out.grad.T @ xb / m + cfg.weight_decay * W
                gb = out.grad.sum(axis=0) / m
                W = W - cfg.learning_rate * gW
                b = b - cfg.learning_rate * gb
            epoch_loss = total / n + 0.5 * cfg.weight_decay * float(np.sum(W * W))
            if not math.isfinite(epoch_loss) or not np.all(np.isfinite(W)):
                raise LTPDCError(f"training diverged at epoch {epoch}: loss {epoch_loss}")
            history.append(epoch_loss)
    return LinearModel(W, b, tuple(history))


def evaluate(model: LinearModel, test_features, test_labels) -> List[PredictionRecord]:
    z = model.logits(test_features)
    y = np.asarray(test_labels, dtype=np.int64)
    if y.size != z.shape[0]:
        raise LTPDCError(f"{y.size} labels for {z.shape[0]} test samples")
    return [PredictionRecord(i, int(t), row) for i, (t, row) in enumerate(zip(y, z))]


@dataclass
class ExperimentCell:
    loss: str
    imbalance_factor: float
    seed: int
    report: Optional[MetricsReport] = None
    error: Optional[str] = None


@dataclass
class ExperimentSummary:
    loss: str
    imbalance_factor: float
    n_seeds: int
    pdc_mean: float
    pdc_sd: float
    acc_mean: float
    acc_sd: float


@dataclass
class ExperimentResult:
    cells: List[ExperimentCell]
    summary: List[ExperimentSummary]
    pdc_variance: Dict[str, float]  # loss -> variance of mean PDC across IFs

    def summary_for(self, loss: str, imbalance_factor: float) -> ExperimentSummary:
        for s in self.summary:
            if s.loss == loss and s.imbalance_factor == imbalance_factor:
                return s
        raise KeyError((loss, imbalance_factor))


@dataclass(frozen=True)
class ExperimentConfig:
    """Data and optimizer settings shared by every cell of an experiment."""

    num_classes: int = 10
    dim: int = 20
    n_max: int = 500
    separation: float = 2.0
    noise_sigma: float = 1.0
    n_test_per_class: int = 200
    epochs: int = 500
    learning_rate: float = 0.5
    batch_size: Optional[int] = None
    weight_decay: float = 0.0
    alpha: float = DEFAULT_ALPHA
    epsilon: float = EPSILON
    group_spec: GroupSpec = field(default_factory=GroupSpec)


def run_cell(loss: LossSpec, imbalance_factor: float, seed: int,
             cfg: ExperimentConfig = ExperimentConfig()) -> MetricsReport:
    """Train one model on long-tailed data and evaluate it on a balanced test set."""
    profile = exp_profile(cfg.num_classes, cfg.n_max, imbalance_factor)
    train_data = synth_gaussian_mixture(cfg.num_classes, cfg.dim, cfg.separation, profile,
                                        cfg.noise_sigma, seed)
    # distinct noise stream, same class means
    test_data = synth_gaussian_mixture(cfg.num_classes, cfg.dim, cfg.separation,
                                       flat_profile(cfg.num_classes, cfg.n_test_per_class),
                                       cfg.noise_sigma, seed + 1_000_003,
                                       class_means=train_data.class_means)
    model = train(train_data, TrainConfig(loss=loss, epochs=cfg.epochs, learning_rate=cfg.learning_rate,
                                          batch_size=cfg.batch_size, seed=seed,
                                          weight_decay=cfg.weight_decay))
    train_counts = np.asarray(profile.counts, dtype=np.float64)
    z = model.logits(test_data.features)
    if loss.tau > 0:
        z = logit_adjust_inference(z, normalize(train_counts), None, loss.tau)
    cm = confusion_from_labels(test_data.labels, np.argmax(z, axis=1), cfg.num_classes)
    return evaluate_confusion(cm, train_counts, alpha=cfg.alpha, epsilon=cfg.epsilon,
                              group_spec=cfg.group_spec)


def run_experiment(imbalance_factors: Sequence[float], losses: Sequence[LossSpec], seeds: Sequence[int],
                   cfg: ExperimentConfig = ExperimentConfig()) -> ExperimentResult:
    """Train/evaluate every (loss, IF, seed) cell and aggregate over seeds.

    A failing cell records its error and the rest of the table still runs.
    """
    cells = []
    for loss in losses:
        for imf in imbalance_factors:
            for seed in seeds:
                cell = ExperimentCell(loss.name, float(imf), int(seed))
                try:
                    cell.report = run_cell(loss, imf, seed, cfg)
                except LTPDCError as exc:
                    log.warning("cell %s IF=%s seed=%s failed: %s", loss.name, imf, seed, exc)
                    cell.error = str(exc)
                cells.append(cell)

    summary = []
    variance = {}
    for loss in losses:
        means = []
        for imf in imbalance_factors:
            ok = [c.report for c in cells
                  if c.loss == loss.name and c.imbalance_factor == float(imf) and c.report is not None]
            if not ok:
                continue
            pdcs = np.array([r.pdc for r in ok])
            accs = np.array([r.top1_acc for r in ok])
            sd = (lambda a: float(np.std(a, ddof=1)) if a.size > 1 else 0.0)
            summary.append(ExperimentSummary(loss.name, float(imf), len(ok), float(pdcs.mean()), sd(pdcs),
                                             float(accs.mean()), sd(accs)))
            means.append(float(pdcs.mean()))
        if len(means) >= 2:
            variance[loss.name] = pdc_variance(means)
    return ExperimentResult(cells, summary, variance)
