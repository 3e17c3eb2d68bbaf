"""Long-tailed splits, synthetic Gaussian-mixture data and a prior-shift simulator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .distributions import ClassDistribution, PredictionRecord, as_distribution, normalize
from .errors import InfeasibleError, LTPDCError


@dataclass(frozen=True)
class LTProfile:
    num_classes: int
    n_max: int
    imbalance_factor: float
    counts: tuple

    @property
    def realized_imbalance_factor(self) -> float:
        return self.counts[0] / self.counts[-1]

    @property
    def total(self) -> int:
        return sum(self.counts)


def exp_profile(num_classes: int, n_max: int, imbalance_factor: float) -> LTProfile:
    """Exponentially decaying per-class counts n_max * IF**(-i / (C - 1)).

    Counts are rounded half-to-even and clamped to at least 1.  IF = 1
    yields a flat profile.
    """
    if num_classes < 2:
        raise LTPDCError(f"need at least 2 classes, got {num_classes}")
    if n_max < 1:
        raise LTPDCError(f"n_max must be >= 1, got {n_max}")
    if not imbalance_factor >= 1:
        raise LTPDCError(f"imbalance factor must be >= 1, got {imbalance_factor}")
    if n_max < imbalance_factor:
        raise InfeasibleError(
            f"tail class would be empty: n_max={n_max} < imbalance factor {imbalance_factor}"
        )
    i = np.arange(num_classes, dtype=np.float64)
    raw = n_max * imbalance_factor ** (-i / (num_classes - 1))
    counts = np.maximum(np.round(raw), 1).astype(np.int64)
    return LTProfile(num_classes, int(n_max), float(imbalance_factor), tuple(int(c) for c in counts))


def flat_profile(num_classes: int, n_per_class: int) -> LTProfile:
    return exp_profile(num_classes, n_per_class, 1.0)


def _class_rng(seed: int, cls: int) -> np.random.Generator:
    # keyed by class position so classes can be generated in any order
    return np.random.default_rng([seed, cls])


def subsample_indices(labels: Sequence[int], profile: LTProfile, seed: int) -> np.ndarray:
    """Pick profile.counts[c] indices of each class c; returns them sorted ascending."""
    y = np.asarray(labels, dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= profile.num_classes):
        raise LTPDCError(f"labels must lie in [0, {profile.num_classes})")
    chosen = []
    for c, k in enumerate(profile.counts):
        pool = np.flatnonzero(y == c)
        if pool.size < k:
            raise InfeasibleError(f"class {c} has {pool.size} samples, profile needs {k}")
        perm = _class_rng(seed, c).permutation(pool.size)
        chosen.append(pool[perm[:k]])
    return np.sort(np.concatenate(chosen))


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    features: np.ndarray
    labels: np.ndarray
    class_means: np.ndarray
    noise_sigma: float
    seed: int

    @property
    def num_classes(self) -> int:
        return self.class_means.shape[0]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


def sphere_means(num_classes: int, dim: int, radius: float, seed: int) -> np.ndarray:
    """Class means on the radius-``radius`` sphere, under a seeded random rotation.

    When C <= d the means are mutually orthogonal, so every pair sits at
    distance radius * sqrt(2).  Otherwise they are random unit directions.
    """
    rng = np.random.default_rng([seed, 0x5EED])
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    if num_classes <= dim:
        return radius * q[:, :num_classes].T.copy()
    v = rng.standard_normal((num_classes, dim))
    return radius * v / np.linalg.norm(v, axis=1, keepdims=True)


def synth_gaussian_mixture(num_classes, dim, separation, profile: LTProfile, noise_sigma, seed,
                           class_means=None) -> SyntheticDataset:
    """Isotropic Gaussian blobs around sphere-placed means, counts per ``profile``.

    Pass ``class_means`` from an earlier call to draw a test set from the same mixture.
    """
    if dim < 2:
        raise LTPDCError(f"dimension must be >= 2, got {dim}")
    if not separation > 0:
        raise LTPDCError(f"separation must be > 0, got {separation}")
    if noise_sigma < 0:
        raise LTPDCError(f"noise_sigma must be >= 0, got {noise_sigma}")
    if profile.num_classes != num_classes:
        raise LTPDCError(f"profile has {profile.num_classes} classes, expected {num_classes}")
    if class_means is None:
        means = sphere_means(num_classes, dim, separation, seed)
    else:
        means = np.asarray(class_means, dtype=np.float64)
        if means.shape != (num_classes, dim):
            raise LTPDCError(f"class_means shape {means.shape} != {(num_classes, dim)}")
    feats, labels = [], []
    for c, k in enumerate(profile.counts):
        noise = np.random.default_rng([seed, 1, c]).standard_normal((k, dim))
        feats.append(means[c] + noise_sigma * noise)
        labels.append(np.full(k, c, dtype=np.int64))
    return SyntheticDataset(
        features=np.concatenate(feats),
        labels=np.concatenate(labels),
        class_means=means,
        noise_sigma=float(noise_sigma),
        seed=int(seed),
    )


def _positive_probs(d, what):
    d = as_distribution(d)
    p = d.mass if d.normalized else normalize(d).mass
    if np.any(p <= 0):
        raise LTPDCError(f"{what} has zero entries")
    return p


def _shift_rows(posteriors, from_prior, to_prior):
    q = posteriors * (to_prior / from_prior)
    return q / q.sum(axis=-1, keepdims=True)


def prior_shift(posterior, from_prior, to_prior) -> ClassDistribution:
    """Re-weight a posterior computed under ``from_prior`` to one under ``to_prior``.

    q_i is proportional to posterior_i * to_prior_i / from_prior_i.
    """
    p = _positive_probs(posterior, "posterior")
    a = _positive_probs(from_prior, "from_prior")
    b = _positive_probs(to_prior, "to_prior")
    if not (p.size == a.size == b.size):
        raise LTPDCError("posterior and priors disagree on the number of classes")
    return normalize(_shift_rows(p, a, b))


def simulate_biased_log(class_confusability: float, train_prior, n_test_per_class: int,
                        seed: int) -> List[PredictionRecord]:
    """Prediction log of an ideal classifier that has absorbed ``train_prior``.

    Each test sample of class y gets a balanced posterior with mass
    1 - confusability on y and the rest spread over the other classes by a
    flat Dirichlet draw.  The posterior is shifted from the uniform prior to
    ``train_prior`` and the prediction is its argmax.
    """
    if not 0.0 <= class_confusability < 1.0:
        raise LTPDCError(f"confusability must lie in [0, 1), got {class_confusability}")
    if n_test_per_class < 1:
        raise LTPDCError("n_test_per_class must be >= 1")
    prior = _positive_probs(train_prior, "train_prior")
    C = prior.size
    uniform = np.full(C, 1.0 / C)
    rng = np.random.default_rng(seed)
    y = np.repeat(np.arange(C), n_test_per_class)
    off = rng.dirichlet(np.ones(C - 1), size=y.size)
    post = np.empty((y.size, C))
    for c in range(C):
        rows = y == c
        others = np.delete(np.arange(C), c)
        post[np.ix_(rows, others)] = class_confusability * off[rows]
        post[rows, c] = 1.0 - class_confusability
    pred = np.argmax(_shift_rows(post, uniform, prior), axis=1)
    return [PredictionRecord(i, int(t), int(p)) for i, (t, p) in enumerate(zip(y, pred))]
