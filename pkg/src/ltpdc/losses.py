"""Loss functions for long-tailed classification with hand-derived gradients.

Every loss maps logits to a :class:`LossOutput` holding the loss value and
its gradient with respect to the logits.  Inputs may be a single sample
(``logits`` of shape ``(C,)`` and an int label) or a batch (``(N, C)`` and
``N`` labels); batch calls return per-sample values.

All math is float64 with log-sum-exp / log-sigmoid stabilization.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .distributions import ClassDistribution, as_distribution, normalize
from .errors import LTPDCError

FAMILIES = ("CE", "BCE", "CB-CE", "LDAM", "BalCE")


@dataclass(frozen=True)
class LossOutput:
    value: object  # float for one sample, ndarray of per-sample losses for a batch
    grad: np.ndarray


def _prep(logits, labels):
    z = np.asarray(logits, dtype=np.float64)
    single = z.ndim == 1
    z2 = np.atleast_2d(z)
    if z2.ndim != 2:
        raise LTPDCError(f"logits must be 1-D or 2-D, got shape {z.shape}")
    if not np.all(np.isfinite(z2)):
        raise LTPDCError("non-finite logits")
    y = np.atleast_1d(np.asarray(labels))
    if not np.issubdtype(y.dtype, np.integer):
        raise LTPDCError("labels must be integers")
    y = y.astype(np.int64)
    if y.size != z2.shape[0]:
        raise LTPDCError(f"{y.size} labels for {z2.shape[0]} logit rows")
    C = z2.shape[1]
    bad = (y < 0) | (y >= C)
    if np.any(bad):
        raise LTPDCError(f"label {y[bad][0]} out of range for {C} classes")
    return z2, y, single


def _out(value, grad, single):
    if single:
        return LossOutput(float(value[0]), grad[0])
    return LossOutput(value, grad)


def _log_softmax(z):
    rows = np.arange(z.shape[0])
    top = z.argmax(axis=1)
    shifted = z - z[rows, top][:, None]
    e = np.exp(shifted)
    e[rows, top] = 0.0
    # log(1 + rest) via log1p keeps confident-sample losses accurate to full relative precision
    return shifted - np.log1p(e.sum(axis=1, keepdims=True))


def softmax(logits) -> np.ndarray:
    """Row-wise softmax with max subtraction.  1-D input gives a 1-D result."""
    z = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise LTPDCError("non-finite logits")
    z2 = np.atleast_2d(z)
    e = np.exp(z2 - z2.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)
    return p[0] if z.ndim == 1 else p


def _ce_rows(z, y, weights=None):
    logp = _log_softmax(z)
    rows = np.arange(z.shape[0])
    value = -logp[rows, y]
    grad = np.exp(logp)
    # p_y - 1 without cancellation when p_y is close to 1
    grad[rows, y] = np.expm1(logp[rows, y])
    if weights is not None:
        w = weights[y]
        value = value * w
        grad = grad * w[:, None]
    return value, grad


def ce_loss(logits, labels) -> LossOutput:
    z, y, single = _prep(logits, labels)
    return _out(*_ce_rows(z, y), single)


def bce_loss(logits, labels) -> LossOutput:
    """One-vs-all sigmoid cross-entropy, summed over classes."""
    z, y, single = _prep(logits, labels)
    t = np.zeros_like(z)
    t[np.arange(z.shape[0]), y] = 1.0
    # -ln sigma(z) = softplus(-z);  -ln(1 - sigma(z)) = softplus(z)
    value = np.sum(t * np.logaddexp(0.0, -z) + (1.0 - t) * np.logaddexp(0.0, z), axis=1)
    # sigma(z) - t, with the t = 1 entries written as -sigma(-z) to avoid cancellation
    grad = np.where(t == 1.0, -np.exp(-np.logaddexp(0.0, z)), np.exp(-np.logaddexp(0.0, -z)))
    return _out(value, grad, single)


def cb_weights(train_counts, beta: float) -> np.ndarray:
    """Effective-number class weights (1 - beta) / (1 - beta**n), rescaled to sum to C."""
    if not 0.0 <= beta < 1.0:
        raise LTPDCError(f"beta must lie in [0, 1), got {beta}")
    n = np.asarray(train_counts, dtype=np.float64)
    if np.any(n < 1):
        raise LTPDCError("class-balanced weights need every class count >= 1")
    w = effective_number_weights(n, beta)
    return w * (n.size / w.sum())


def effective_number_weights(train_counts, beta: float) -> np.ndarray:
    """Unrescaled (1 - beta) / (1 - beta**n)."""
    n = np.asarray(train_counts, dtype=np.float64)
    if beta == 0.0:
        return np.ones_like(n)
    # expm1/log1p keep precision for beta close to 1
    return -np.expm1(np.log(beta)) / -np.expm1(n * np.log(beta))


def cb_ce_loss(logits, labels, train_counts, beta: float) -> LossOutput:
    z, y, single = _prep(logits, labels)
    w = cb_weights(train_counts, beta)
    if w.size != z.shape[1]:
        raise LTPDCError(f"{w.size} class counts for {z.shape[1]} classes")
    return _out(*_ce_rows(z, y, w), single)


def ldam_margins(train_counts, margin_scale: Optional[float] = None, max_margin: float = 0.5):
    """Per-class margins margin_scale / n**(1/4).

    With ``margin_scale=None`` the scale is chosen so the largest margin
    (rarest class) equals ``max_margin``.
    """
    n = np.asarray(train_counts, dtype=np.float64)
    if np.any(n < 1):
        raise LTPDCError("LDAM margins need every class count >= 1")
    inv = n ** -0.25
    if margin_scale is None:
        return inv * (max_margin / inv.max())
    if margin_scale < 0:
        raise LTPDCError(f"margin_scale must be >= 0, got {margin_scale}")
    return margin_scale * inv


def ldam_loss(logits, labels, train_counts, margin_scale: Optional[float] = None, s: float = 30.0,
              max_margin: float = 0.5) -> LossOutput:
    """Cross-entropy on s * (z - margin at the true class)."""
    if not s > 0:
        raise LTPDCError(f"logit scale s must be > 0, got {s}")
    z, y, single = _prep(logits, labels)
    delta = ldam_margins(train_counts, margin_scale, max_margin)
    if delta.size != z.shape[1]:
        raise LTPDCError(f"{delta.size} class counts for {z.shape[1]} classes")
    rows = np.arange(z.shape[0])
    zm = z.copy()
    zm[rows, y] -= delta[y]
    value, g = _ce_rows(s * zm, y)
    return _out(value, s * g, single)


def _log_prior(prior) -> np.ndarray:
    p = as_distribution(prior)
    p = p.mass if p.normalized else normalize(p).mass
    if np.any(p <= 0):
        raise LTPDCError("prior has a zero entry")
    return np.log(p)


def balanced_ce_loss(logits, labels, prior) -> LossOutput:
    """Cross-entropy on logits shifted by the log training prior."""
    z, y, single = _prep(logits, labels)
    lp = _log_prior(prior)
    if lp.size != z.shape[1]:
        raise LTPDCError(f"prior over {lp.size} classes for {z.shape[1]} logits")
    return _out(*_ce_rows(z + lp, y), single)


def logit_adjust_inference(logits, train_prior, target_prior=None, tau: float = 1.0) -> np.ndarray:
    """Post-hoc correction z - tau * (ln P_train - ln P_target).

    ``target_prior`` defaults to uniform.
    """
    if tau < 0:
        raise LTPDCError(f"tau must be >= 0, got {tau}")
    z = np.asarray(logits, dtype=np.float64)
    ls = _log_prior(train_prior)
    lt = _log_prior(ClassDistribution.uniform(ls.size) if target_prior is None else target_prior)
    if ls.size != lt.size or z.shape[-1] != ls.size:
        raise LTPDCError("logits and priors disagree on the number of classes")
    if tau == 0:
        return z.copy()
    return z - tau * (ls - lt)


@dataclass(frozen=True)
class LossSpec:
    """Which loss to train with, plus its hyperparameters.

    ``tau`` is applied post hoc at evaluation time (0 = off).  ``prior`` for
    BalCE defaults to the empirical training frequencies.
    """

    family: str = "CE"
    beta: float = 0.999
    margin_scale: Optional[float] = None
    s: float = 30.0
    max_margin: float = 0.5
    prior: Optional[ClassDistribution] = None
    tau: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise LTPDCError(f"unknown loss family {self.family!r}; expected one of {FAMILIES}")
        if not 0.0 <= self.beta < 1.0:
            raise LTPDCError(f"beta must lie in [0, 1), got {self.beta}")
        if not self.s > 0:
            raise LTPDCError(f"s must be > 0, got {self.s}")
        if self.margin_scale is not None and self.margin_scale < 0:
            raise LTPDCError(f"margin_scale must be >= 0, got {self.margin_scale}")
        if self.tau < 0:
            raise LTPDCError(f"tau must be >= 0, got {self.tau}")

    @property
    def name(self) -> str:
        return self.family if self.tau == 0 else f"{self.family}+LA(tau={self.tau:g})"

    def bind(self, train_counts) -> Callable[[np.ndarray, np.ndarray], LossOutput]:
        """Return ``f(logits, labels) -> LossOutput`` with class counts baked in."""
        counts = np.asarray(train_counts, dtype=np.float64)
        if self.family == "CE":
            return ce_loss
        if self.family == "BCE":
            return bce_loss
        if self.family == "CB-CE":
            w = cb_weights(counts, self.beta)
            return lambda z, y: _weighted(z, y, w)
        if self.family == "LDAM":
            return lambda z, y: ldam_loss(z, y, counts, self.margin_scale, self.s, self.max_margin)
        prior = self.prior if self.prior is not None else normalize(counts)
        return lambda z, y: balanced_ce_loss(z, y, prior)


def _weighted(z, y, w):
    z, y, single = _prep(z, y)
    return _out(*_ce_rows(z, y, w), single)
