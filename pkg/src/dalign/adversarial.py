"""Conditional adversarial alignment.

The domain discriminator does not see features alone: each feature row is
conditioned on the classifier's softmax prediction for that row through a
multilinear map.  When the full outer product would be too wide, a seeded
random projection of fixed width stands in for it.  A gradient-reversal
layer turns the discriminator's objective into an alignment pressure on the
feature extractor, so one optimizer step serves both sides of the minimax.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import DomainError, ParameterError, ShapeError

EXACT_DIM_LIMIT = 4096
RANDOM_DIM = 1024
PROB_CLAMP = 1e-7

MODES = ("exact_multilinear", "randomized_multilinear", "concatenation")


@dataclass(frozen=True)
class ConditioningMap:
    """How feature rows combine with prediction rows before the discriminator.

    exact_multilinear: flattened per-row outer product, output_dim = d_f * K.
    randomized_multilinear: elementwise product of two fixed random
    projections, scaled by 1/sqrt(output_dim); r_f and r_g are drawn once
    from a seeded generator and never trained.
    concatenation: baseline [f, g] side by side, output_dim = d_f + K.
    """

    mode: str
    feature_dim: int
    class_count: int
    output_dim: int
    seed: int | None = None
    r_f: np.ndarray | None = None
    r_g: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"unknown conditioning mode {self.mode!r}")


def make_conditioning_map(feature_dim: int, class_count: int, seed: int,
                          exact_limit: int = EXACT_DIM_LIMIT,
                          random_dim: int = RANDOM_DIM) -> ConditioningMap:
    """Pick the exact map when its width fits within exact_limit, otherwise
    build the seeded randomized map of width random_dim.  The choice is a
    pure function of the dimensions and the limits."""
    if feature_dim < 1 or class_count < 1:
        raise ParameterError("feature_dim and class_count must be >= 1")
    full = feature_dim * class_count
    if full <= exact_limit:
        return ConditioningMap(mode="exact_multilinear",
                               feature_dim=feature_dim,
                               class_count=class_count,
                               output_dim=full)
    rng = np.random.default_rng(seed)
    r_f = rng.standard_normal((feature_dim, random_dim))
    r_g = rng.standard_normal((class_count, random_dim))
    return ConditioningMap(mode="randomized_multilinear",
                           feature_dim=feature_dim,
                           class_count=class_count,
                           output_dim=random_dim,
                           seed=seed, r_f=r_f, r_g=r_g)


def _check_pair(f: Tensor, g: Tensor) -> None:
    if f.values.ndim != 2 or g.values.ndim != 2:
        raise ShapeError("conditioning expects two matrices")
    if f.shape[0] != g.shape[0]:
        raise ShapeError(f"batch sizes differ: {f.shape[0]} vs {g.shape[0]}")


def multilinear_map(f: Tensor, g: Tensor) -> Tensor:
    """Row i of the result is flatten(f_i g_i^T), width d_f * K."""
    _check_pair(f, g)
    return ad.outer_flatten(f, g)


def randomized_multilinear(f: Tensor, g: Tensor,
                           cmap: ConditioningMap) -> Tensor:
    """Row i = (1/sqrt(d_r)) (R_f^T f_i) * (R_g^T g_i)."""
    if cmap.mode != "randomized_multilinear":
        raise ParameterError(f"map mode is {cmap.mode!r}, expected "
                             "randomized_multilinear")
    _check_pair(f, g)
    pf = ad.matmul(f, Tensor(cmap.r_f))
    pg = ad.matmul(g, Tensor(cmap.r_g))
    scale = Tensor(1.0 / np.sqrt(float(cmap.output_dim)))
    return ad.mul(scale, ad.mul(pf, pg))


def conditioned_features(f: Tensor, g: Tensor,
                         cmap: ConditioningMap) -> Tensor:
    """Dispatch f, g through the map configured in cmap."""
    _check_pair(f, g)
    if f.shape[1] != cmap.feature_dim:
        raise ShapeError(f"feature dim {f.shape[1]} does not match map "
                         f"({cmap.feature_dim})")
    if g.shape[1] != cmap.class_count:
        raise ShapeError(f"class count {g.shape[1]} does not match map "
                         f"({cmap.class_count})")
    if cmap.mode == "exact_multilinear":
        return multilinear_map(f, g)
    if cmap.mode == "randomized_multilinear":
        return randomized_multilinear(f, g, cmap)
    # concatenation baseline, via a transpose round trip (row-wise concat
    # is the only stacking primitive)
    return ad.transpose(ad.concat_rows([ad.transpose(f), ad.transpose(g)]))


def _as_column(d: Tensor, name: str) -> Tensor:
    v = d.values
    if v.ndim == 1:
        d = ad.reshape(d, (v.shape[0], 1))
    elif v.ndim != 2 or v.shape[1] != 1:
        raise ShapeError(f"{name} discriminator output must be a vector or "
                         f"single column, got {d.shape}")
    if d.shape[0] == 0:
        raise ShapeError(f"empty {name} discriminator batch")
    return d


def domain_disc_loss(d_source: Tensor, d_target: Tensor) -> Tensor:
    """Binary cross-entropy of the discriminator, source labeled 1 and
    target labeled 0:

        -mean(log d_s) - mean(log(1 - d_t))

    Outputs must lie in [0, 1]; they are clamped away from the endpoints
    before the logarithm.
    """
    d_s = _as_column(d_source, "source")
    d_t = _as_column(d_target, "target")
    for name, d in (("source", d_s), ("target", d_t)):
        if np.any(d.values < 0.0) or np.any(d.values > 1.0):
            raise DomainError(f"{name} discriminator output outside [0, 1]")
    s = ad.clamp_min(d_s, PROB_CLAMP)
    one_minus_t = ad.clamp_min(ad.sub(Tensor(1.0), d_t), PROB_CLAMP)
    loss_s = ad.negate(ad.tmean(ad.tlog(s)))
    loss_t = ad.negate(ad.tmean(ad.tlog(one_minus_t)))
    return ad.add(loss_s, loss_t)


def cdan_adversarial_loss(f_s: Tensor, g_s: Tensor, f_t: Tensor, g_t: Tensor,
                          discriminator, cmap: ConditioningMap,
                          grl_scale: float) -> Tensor:
    """Discriminator loss on conditioned features with gradient reversal.

    Features pass through the reversal layer before conditioning, so the
    discriminator's parameters receive the plain loss gradient while the
    feature extractor receives it scaled by -grl_scale.  Predictions enter
    detached: the conditioning signal carries no gradient to the classifier
    head.
    """
    f_s = ad.grad_reverse(f_s, grl_scale)
    f_t = ad.grad_reverse(f_t, grl_scale)
    h_s = conditioned_features(f_s, g_s.detach(), cmap)
    h_t = conditioned_features(f_t, g_t.detach(), cmap)
    d_s = discriminator(h_s)
    d_t = discriminator(h_t)
    return domain_disc_loss(d_s, d_t)
