"""Gaussian multi-kernel machinery: bandwidth selection, gram matrices,
biased MMD^2, and its pseudo-label-weighted variant.

The kernel value between two points is the SUM of Gaussians over the
configured bandwidth family, k(x, y) = sum_s exp(-||x - y||^2 / (2 s^2)).
All statistics are biased V-statistics (diagonal terms included), so
mmd2(X, X) is exactly zero in floating point: the three gram blocks are
computed from one pooled distance matrix and cancel term by term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ParameterError, ShapeError

DEFAULT_KERNEL_COUNT = 5
DEFAULT_KERNEL_STEP = 2.0
TARGET_MASS_EPS = 1e-6


@dataclass(frozen=True)
class KernelConfig:
    """Bandwidth family for the Gaussian kernel sum.

    bandwidths are the sigma values; each contributes exp(-d2 / (2 sigma^2)).
    """

    bandwidths: tuple[float, ...]

    def __post_init__(self):
        if len(self.bandwidths) == 0:
            raise ParameterError("kernel family must contain at least one bandwidth")
        for s in self.bandwidths:
            if not (s > 0.0 and np.isfinite(s)):
                raise ParameterError(f"bandwidths must be positive finite, got {s}")


def median_heuristic(x: np.ndarray, y: np.ndarray) -> float:
    """Bandwidth sigma from the median pairwise squared distance of the
    pooled sample, via 2 sigma^2 = median.  Zero distances are excluded;
    if every pair coincides the fallback is sigma = 1."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ShapeError(f"incompatible sample shapes {x.shape} and {y.shape}")
    pooled = np.concatenate([x, y], axis=0)
    n = pooled.shape[0]
    if n < 2:
        raise ParameterError("median heuristic needs at least two pooled points")
    sq = ((pooled[:, None, :] - pooled[None, :, :]) ** 2).sum(axis=2)
    iu = np.triu_indices(n, k=1)
    d2 = sq[iu]
    d2 = d2[d2 > 0.0]
    if d2.size == 0:
        return 1.0
    med = float(np.median(d2))
    return float(np.sqrt(med / 2.0))


def bandwidth_family(sigma: float, count: int = DEFAULT_KERNEL_COUNT,
                     step: float = DEFAULT_KERNEL_STEP) -> KernelConfig:
    """Geometric ladder of `count` bandwidths centred on sigma:
    sigma * step^(-(count//2)) ... sigma * step^(count//2)."""
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    if step <= 0.0:
        raise ParameterError(f"step must be positive, got {step}")
    half = count // 2
    return KernelConfig(tuple(sigma * step ** k
                              for k in range(-half, count - half)))


def default_config(x: np.ndarray, y: np.ndarray) -> KernelConfig:
    """Five-kernel family centred on the pooled median-heuristic bandwidth."""
    return bandwidth_family(median_heuristic(x, y))


def gaussian_gram(x: Tensor, y: Tensor, config: KernelConfig) -> Tensor:
    """Gram matrix G[i, j] = sum_s exp(-||x_i - y_j||^2 / (2 s^2))."""
    d2 = ad.pairwise_sq_dists(x, y)
    total = None
    for s in config.bandwidths:
        term = ad.texp(ad.mul(d2, Tensor(-1.0 / (2.0 * s * s))))
        total = term if total is None else ad.add(total, term)
    return total


def mmd2_biased(x: Tensor, y: Tensor, config: KernelConfig) -> Tensor:
    """Biased V-statistic estimate of squared MMD between the samples:
    mean(K_xx) - 2 mean(K_xy) + mean(K_yy).

    The three blocks are evaluated by the same code path, so when x and y
    hold identical values the result is exactly zero, not merely tiny.
    """
    n = x.shape[0]
    m = y.shape[0]
    if n == 0 or m == 0:
        raise ParameterError("mmd2 of an empty sample")
    return _weighted_blocks(x, y, config,
                            Tensor(np.full((n, n), 1.0 / (n * n))),
                            Tensor(np.full((n, m), 1.0 / (n * m))),
                            Tensor(np.full((m, m), 1.0 / (m * m))))


def _weighted_blocks(x: Tensor, y: Tensor, config: KernelConfig,
                     w_xx: Tensor, w_xy: Tensor, w_yy: Tensor) -> Tensor:
    """sum(w_xx * K_xx) - 2 sum(w_xy * K_xy) + sum(w_yy * K_yy)."""
    term_xx = ad.tsum(ad.mul(gaussian_gram(x, x, config), w_xx))
    term_xy = ad.tsum(ad.mul(gaussian_gram(x, y, config), w_xy))
    term_yy = ad.tsum(ad.mul(gaussian_gram(y, y, config), w_yy))
    return ad.add(ad.sub(term_xx, ad.mul(Tensor(2.0), term_xy)), term_yy)


@dataclass(frozen=True)
class WeightTriple:
    """Class-conditional pair weights for the weighted MMD estimate.

    Each matrix is nonnegative and sums to one when at least one class is
    shared between the domains; all three are zero otherwise.
    """

    w_xx: np.ndarray
    w_xy: np.ndarray
    w_yy: np.ndarray
    common_classes: int = field(default=0)


def plmmd_weights(source_labels_onehot, target_probs) -> WeightTriple:
    """Pair-weight matrices from a one-hot source label matrix and soft
    target class probabilities (both n x K; Tensor or plain array).

    Per class c the source column is scaled to sum one (a_c) and the target
    column likewise (b_c); a class counts as common when the source column
    has positive mass and the target column mass exceeds a small threshold.
    The weight matrices average the outer products over the common classes:

        w_xx = sum_c a_c a_c^T / |C|,  w_xy = sum_c a_c b_c^T / |C|,
        w_yy = sum_c b_c b_c^T / |C|.

    Weights are plain arrays: no gradient ever flows through them.
    """
    onehot = np.asarray(source_labels_onehot.values
                        if isinstance(source_labels_onehot, Tensor)
                        else source_labels_onehot, dtype=np.float64)
    target_probs = np.asarray(target_probs.values
                              if isinstance(target_probs, Tensor)
                              else target_probs, dtype=np.float64)
    if onehot.ndim != 2 or target_probs.ndim != 2:
        raise ShapeError("label/probability inputs must be matrices")
    if onehot.shape[1] != target_probs.shape[1]:
        raise ShapeError(f"class counts differ: {onehot.shape[1]} vs "
                         f"{target_probs.shape[1]}")
    if np.any(onehot < 0.0) or np.any(target_probs < 0.0):
        raise ParameterError("label/probability entries must be nonnegative")
    if np.any(np.abs(target_probs.sum(axis=1) - 1.0) > 1e-6):
        raise ParameterError("target probability rows must sum to one")
    n = onehot.shape[0]
    m = target_probs.shape[0]

    src_mass = onehot.sum(axis=0)
    tgt_mass = target_probs.sum(axis=0)
    common = (src_mass > 0.0) & (tgt_mass > TARGET_MASS_EPS)
    k = int(common.sum())
    if k == 0:
        return WeightTriple(np.zeros((n, n)), np.zeros((n, m)),
                            np.zeros((m, m)), common_classes=0)

    a = np.zeros_like(onehot)
    b = np.zeros_like(target_probs)
    a[:, common] = onehot[:, common] / src_mass[common]
    b[:, common] = target_probs[:, common] / tgt_mass[common]

    w_xx = (a @ a.T) / k
    w_xy = (a @ b.T) / k
    w_yy = (b @ b.T) / k
    return WeightTriple(w_xx, w_xy, w_yy, common_classes=k)


def plmmd(x: Tensor, y: Tensor, weights: WeightTriple,
          config: KernelConfig) -> Tensor:
    """Weighted MMD^2 with the pair weights held constant: gradients flow
    through the kernel evaluations only, never through the weights."""
    n = x.shape[0]
    m = y.shape[0]
    if weights.w_xx.shape != (n, n) or weights.w_xy.shape != (n, m) \
            or weights.w_yy.shape != (m, m):
        raise ShapeError("weight matrices do not match sample sizes "
                         f"({n}, {m})")
    return _weighted_blocks(x, y, config, Tensor(weights.w_xx),
                            Tensor(weights.w_xy), Tensor(weights.w_yy))
