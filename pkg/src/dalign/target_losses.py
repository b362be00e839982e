"""Losses computed from classifier predictions alone.

These shape the unlabeled-domain predictions: the class-confusion penalty
discourages ambiguous pairs of classes, and the information-maximization
term pushes per-example confidence up while keeping the batch-level class
marginal spread out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DomainError, ParameterError, ShapeError

DEFAULT_TEMPERATURE = 2.5
ROW_SUM_TOL = 1e-6
NORM_EPS = 1e-12


def _check_probs(probs: Tensor, what: str) -> None:
    v = probs.values
    if v.ndim != 2:
        raise ShapeError(f"{what} expects a (n, K) matrix, got {probs.shape}")
    if np.any(v < 0.0):
        raise DomainError(f"{what}: negative probability entry")
    if np.any(np.abs(v.sum(axis=1) - 1.0) > ROW_SUM_TOL):
        raise DomainError(f"{what}: rows must sum to one")


def entropy(probs: Tensor) -> Tensor:
    """Shannon entropy of each probability row, in nats; returns a vector.

    Zero entries contribute zero via the clamped logarithm.
    """
    _check_probs(probs, "entropy")
    plogp = ad.mul(probs, ad.safe_log(probs))
    return ad.negate(ad.tsum(plogp, axis=1))


def uncertainty_weights(logits: Tensor,
                        temperature: float = DEFAULT_TEMPERATURE) -> Tensor:
    """Per-example weights that favour confident predictions.

    With H_i the entropy of the temperature-scaled softmax row,
    w_i = n (1 + exp(-H_i)) / sum_j (1 + exp(-H_j)); the weights sum to n.
    """
    probs = ad.softmax(logits, temperature)
    h = entropy(probs)
    raw = ad.add(Tensor(1.0), ad.texp(ad.negate(h)))
    n = logits.shape[0]
    total = ad.tsum(raw)
    return ad.div(ad.mul(Tensor(float(n)), raw), total)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Detached snapshot of the K x K class-confusion matrix.  When
    row_normalized, every row with positive mass sums to one."""

    entries: np.ndarray
    row_normalized: bool


def _confusion(logits: Tensor, temperature: float) -> tuple[Tensor, Tensor, int]:
    if logits.values.ndim != 2:
        raise ShapeError(f"expected (n, K) logits, got {logits.shape}")
    k = logits.shape[1]
    if k < 2:
        raise ParameterError(f"class confusion needs K >= 2 classes, got {k}")
    probs = ad.softmax(logits, temperature)
    w = uncertainty_weights(logits, temperature)
    # C = Y^T diag(w) Y, written with a row broadcast instead of a diag matmul
    n = logits.shape[0]
    weighted_t = ad.mul(ad.transpose(probs), ad.reshape(w, (1, n)))
    raw = ad.matmul(weighted_t, probs)
    row_sums = ad.tsum(raw, axis=1, keepdims=True)
    denom = ad.clamp_min(row_sums, NORM_EPS)
    # row-normalize: divide each row by its sum via a transpose round trip,
    # since only row-vector broadcasting exists
    normalized = ad.transpose(ad.div(ad.transpose(raw), ad.transpose(denom)))
    return raw, normalized, k


def mcc_loss(logits: Tensor, temperature: float = DEFAULT_TEMPERATURE) -> Tensor:
    """Minimum class confusion: mean off-diagonal mass of the row-normalized,
    uncertainty-weighted class-correlation matrix.

    loss = (sum(C_norm) - trace(C_norm)) / K.
    """
    _, normalized, k = _confusion(logits, temperature)
    eye = Tensor(np.eye(k))
    total = ad.tsum(normalized)
    diag = ad.tsum(ad.mul(normalized, eye))
    return ad.div(ad.sub(total, diag), Tensor(float(k)))


def confusion_matrix(logits: Tensor, temperature: float = DEFAULT_TEMPERATURE,
                     row_normalized: bool = True) -> ConfusionMatrix:
    """Detached view of the class-confusion matrix used by mcc_loss."""
    raw, normalized, _ = _confusion(logits, temperature)
    picked = normalized if row_normalized else raw
    return ConfusionMatrix(entries=picked.values.copy(),
                           row_normalized=row_normalized)


def im_loss(probs: Tensor) -> Tensor:
    """Information maximization: mean per-example entropy minus the entropy
    of the mean prediction.  Negative values reward confident yet diverse
    predictions; the range is [-log K, log K]."""
    _check_probs(probs, "im_loss")
    per_example = ad.tmean(entropy(probs))
    n = probs.shape[0]
    marginal = ad.div(ad.tsum(probs, axis=0, keepdims=True), Tensor(float(n)))
    marginal_entropy = ad.tsum(entropy(marginal))
    return ad.sub(per_example, marginal_entropy)
