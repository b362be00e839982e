"""The composite training objective and the loop that optimizes it.

One optimizer instance covers all three networks; the adversarial minimax
is realized by gradient reversal inside the adversarial term, not by
alternating updates.  Every term whose coefficient is exactly zero is
skipped outright (and reported as zero), which keeps the source-only
degeneration path bit-identical to a plain classifier loop.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import adversarial, autodiff as ad, data, kernels, target_losses
from .autodiff import Tensor
from .errors import DomainError, NumericError, ParameterError, ShapeError
from .models import Models, init_models, default_feature_spec

BREAKDOWN_KEYS = ("clc", "dis", "im", "mcc", "mmd", "plmmd", "composite")


@dataclass(frozen=True)
class TrainConfig:
    """Every scalar the training loop consumes, defaults as documented."""

    lr: float = 1e-5
    batch_size: int = 32
    epochs: int = 20
    beta: float = 0.05        # information-maximization coefficient
    gamma: float = 1.4        # class-confusion coefficient
    delta: float = 0.54       # plain MMD coefficient
    eta: float = 0.54         # weighted (pseudo-label) MMD coefficient
    lambda_max: float = 1.0   # adversarial warm-up ceiling
    temperature: float = 2.5  # class-confusion softmax temperature
    beta1: float = 0.9
    beta2: float = 0.999
    weight_decay: float = 0.001
    eps: float = 1e-8
    seed: int = 0
    conditioning_exact_limit: int = adversarial.EXACT_DIM_LIMIT
    conditioning_random_dim: int = adversarial.RANDOM_DIM
    kernel_count: int = kernels.DEFAULT_KERNEL_COUNT
    kernel_step: float = kernels.DEFAULT_KERNEL_STEP

    def __post_init__(self):
        if not (self.lr > 0.0 and math.isfinite(self.lr)):
            raise ParameterError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ParameterError(f"epochs must be >= 1, got {self.epochs}")
        if self.temperature <= 0.0:
            raise ParameterError(f"temperature must be positive, got "
                                 f"{self.temperature}")
        if self.lambda_max < 0.0:
            raise ParameterError(f"lambda_max must be >= 0, got {self.lambda_max}")
        for name in ("beta", "gamma", "delta", "eta", "lambda_max",
                     "weight_decay"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ParameterError(f"{name} must be finite, got {v}")


@dataclass
class DomainBatch:
    """One training step's worth of data: labeled source, unlabeled target."""

    source_features: Tensor
    source_labels: np.ndarray
    target_features: Tensor


@dataclass
class EpochMetrics:
    """Per-epoch means of each loss term plus accuracies.

    wall_clock_seconds is informational and never written to the metrics
    file (runs must produce byte-identical files).
    """

    epoch: int
    clc: float
    dis: float
    im: float
    mcc: float
    mmd: float
    plmmd: float
    composite: float
    source_accuracy: float
    target_accuracy: float | None
    wall_clock_seconds: float = field(default=0.0, compare=False)


def classification_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy -(1/n) sum_i log softmax(logits)_{i, y_i}."""
    labels = np.asarray(labels, dtype=int)
    if logits.values.ndim != 2:
        raise ShapeError(f"logits must be (n, K), got {logits.shape}")
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels must have shape ({n},), got {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise DomainError("label outside [0, K)")
    probs = ad.softmax(logits, 1.0)
    onehot = Tensor(data.one_hot(labels, k))
    picked = ad.tsum(ad.mul(onehot, ad.safe_log(probs)))
    return ad.div(ad.negate(picked), Tensor(float(n)))


def pseudo_labels(classifier_stack: tuple, target_batch: Tensor) -> Tensor:
    """softmax(N(F(x_t)), temperature 1), detached from the graph."""
    f, n = classifier_stack
    return ad.softmax(n(f(target_batch)), 1.0).detach()


def lambda_schedule(p: float, lambda_max: float) -> float:
    """Warm-up from 0 to ~lambda_max: lambda(p) = lambda_max*(2/(1+e^-10p)-1)."""
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"progress must be in [0, 1], got {p}")
    return lambda_max * (2.0 / (1.0 + math.exp(-10.0 * p)) - 1.0)


def composite_loss(batch: DomainBatch, models: Models, cfg: TrainConfig,
                   p: float) -> tuple[Tensor, dict]:
    """The full objective on one paired batch.

    Returns the scalar to backpropagate plus a breakdown of raw
    (uncoefficiented) term values; terms with a zero coefficient are
    skipped and reported as zero.  The adversarial term enters the graph
    with coefficient one: its minus sign and lambda scaling are realized
    by gradient reversal inside the term itself, so the reported scalar is
    +L_dis while the feature extractor's gradient is -lambda(p) times the
    discriminator's.
    """
    feats_s = models.feature(batch.source_features)
    logits_s = models.classifier(feats_s)
    breakdown = dict.fromkeys(BREAKDOWN_KEYS, 0.0)

    loss = classification_loss(logits_s, batch.source_labels)
    breakdown["clc"] = loss.item()

    lam = lambda_schedule(p, cfg.lambda_max)
    needs_target = (lam != 0.0 or cfg.beta != 0.0 or cfg.gamma != 0.0
                    or cfg.delta != 0.0 or cfg.eta != 0.0)
    if needs_target:
        feats_t = models.feature(batch.target_features)
        logits_t = models.classifier(feats_t)

    if lam != 0.0:
        if models.conditioning is None:
            raise ParameterError("adversarial term requested but models "
                                 "carry no conditioning map")
        g_s = ad.softmax(logits_s, 1.0).detach()
        g_t = ad.softmax(logits_t, 1.0).detach()
        dis = adversarial.cdan_adversarial_loss(
            feats_s, g_s, feats_t, g_t, models.discriminator,
            models.conditioning, grl_scale=lam)
        breakdown["dis"] = dis.item()
        loss = ad.add(loss, dis)

    if cfg.beta != 0.0:
        im = target_losses.im_loss(ad.softmax(logits_t, 1.0))
        breakdown["im"] = im.item()
        loss = ad.add(loss, ad.mul(Tensor(cfg.beta), im))

    if cfg.gamma != 0.0:
        mcc = target_losses.mcc_loss(logits_t, cfg.temperature)
        breakdown["mcc"] = mcc.item()
        loss = ad.add(loss, ad.mul(Tensor(cfg.gamma), mcc))

    if cfg.delta != 0.0 or cfg.eta != 0.0:
        sigma = kernels.median_heuristic(feats_s.values, feats_t.values)
        kcfg = kernels.bandwidth_family(sigma, cfg.kernel_count,
                                        cfg.kernel_step)
    if cfg.delta != 0.0:
        mmd = kernels.mmd2_biased(feats_s, feats_t, kcfg)
        breakdown["mmd"] = mmd.item()
        loss = ad.add(loss, ad.mul(Tensor(cfg.delta), mmd))

    if cfg.eta != 0.0:
        soft = pseudo_labels((models.feature, models.classifier),
                             batch.target_features)
        onehot = data.one_hot(batch.source_labels, models.class_count)
        w = kernels.plmmd_weights(onehot, soft.values)
        plmmd = kernels.plmmd(feats_s, feats_t, w, kcfg)
        breakdown["plmmd"] = plmmd.item()
        loss = ad.add(loss, ad.mul(Tensor(cfg.eta), plmmd))

    breakdown["composite"] = loss.item()
    return loss, breakdown


# ---------------------------------------------------------------------------
# optimizer


class AdamWState:
    """First/second moment buffers and per-parameter update counters."""

    def __init__(self):
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t: dict[str, int] = {}


def optimizer_step(models: Models, state: AdamWState, cfg: TrainConfig,
                   step_index: int) -> None:
    """One AdamW update over every parameter with a populated gradient.

    Weight decay is decoupled: theta <- theta - lr*wd*theta happens
    alongside (not inside) the adaptive step.  Parameters whose grad is
    None are untouched, so networks outside the current graph keep both
    their values and their moment state.
    """
    for name, param in models.named_parameters():
        g = param.grad
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name} "
                               f"at step {step_index}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(param.values)
            v = np.zeros_like(param.values)
        else:
            v = state.v[name]
        t = state.t.get(name, 0) + 1
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * (g * g)
        m_hat = m / (1.0 - cfg.beta1 ** t)
        v_hat = v / (1.0 - cfg.beta2 ** t)
        theta = param.values
        theta = theta - cfg.lr * cfg.weight_decay * theta \
            - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
        if not np.all(np.isfinite(theta)):
            raise NumericError(f"non-finite update for parameter {name} "
                               f"at step {step_index}")
        param.values = theta
        state.m[name], state.v[name], state.t[name] = m, v, t


def zero_grads(models: Models) -> None:
    for _, param in models.named_parameters():
        param.grad = None


# ---------------------------------------------------------------------------
# the loop


def steps_per_epoch(n_source: int, n_target: int, batch_size: int) -> int:
    return math.ceil(max(n_source, n_target) / batch_size)


def build_models(cfg: TrainConfig, input_dim: int, class_count: int) -> Models:
    """Networks plus the conditioning map, all seeded from cfg.seed."""
    feature_dim = default_feature_spec(input_dim).layer_widths[-1]
    cmap = adversarial.make_conditioning_map(
        feature_dim, class_count, cfg.seed + 3,
        exact_limit=cfg.conditioning_exact_limit,
        random_dim=cfg.conditioning_random_dim)
    models = init_models(input_dim, class_count, cmap.output_dim, cfg.seed)
    models.conditioning = cmap
    return models


def train(cfg: TrainConfig, source: data.DomainDataset,
          target: data.DomainDataset) -> tuple[Models, list[EpochMetrics]]:
    """Run the composite objective for cfg.epochs over both domains.

    The target's labels, when present, are used only by the per-epoch
    evaluation; the training path sees a label-stripped view.  Fully
    deterministic per (cfg, data).
    """
    if source.labels is None:
        raise ParameterError("source dataset must be labeled")
    if source.class_count < 2:
        raise ParameterError("source dataset needs class_count >= 2")
    if source.dim != target.dim:
        raise ShapeError(f"feature dimensions differ: source {source.dim}, "
                         f"target {target.dim}")
    models = build_models(cfg, source.dim, source.class_count)
    state = AdamWState()
    target_train = target.without_labels()
    n_steps = steps_per_epoch(source.n, target.n, cfg.batch_size)
    total_steps = cfg.epochs * n_steps
    src_cycler = data.Cycler(source, cfg.batch_size, cfg.seed)
    tgt_cycler = data.Cycler(target_train, cfg.batch_size, cfg.seed + 1)
    metrics: list[EpochMetrics] = []
    global_step = 0
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        sums = dict.fromkeys(BREAKDOWN_KEYS, 0.0)
        for _ in range(n_steps):
            idx_s = src_cycler.next_batch()
            idx_t = tgt_cycler.next_batch()
            batch = DomainBatch(
                source_features=Tensor(source.features[idx_s]),
                source_labels=source.labels[idx_s],
                target_features=Tensor(target_train.features[idx_t]))
            p = global_step / total_steps
            try:
                loss, breakdown = composite_loss(batch, models, cfg, p)
                zero_grads(models)
                ad.backward(loss)
                optimizer_step(models, state, cfg, global_step)
            except NumericError as e:
                raise NumericError(f"aborted at epoch {epoch} step "
                                   f"{global_step}: {e}") from e
            for k in BREAKDOWN_KEYS:
                sums[k] += breakdown[k]
            global_step += 1
        src_acc = evaluate(models, source)
        tgt_acc = evaluate(models, target) if target.labels is not None else None
        metrics.append(EpochMetrics(
            epoch=epoch,
            **{k: sums[k] / n_steps for k in BREAKDOWN_KEYS},
            source_accuracy=src_acc,
            target_accuracy=tgt_acc,
            wall_clock_seconds=time.perf_counter() - t0))
    return models, metrics


def evaluate(models: Models, ds: data.DomainDataset) -> float:
    """Fraction of rows whose argmax logit matches the label; argmax ties
    break toward the lowest class index."""
    if ds.labels is None:
        raise ParameterError("evaluate needs a labeled dataset")
    if ds.n == 0:
        raise ParameterError("evaluate needs a non-empty dataset")
    logits = models.predict_logits(Tensor(ds.features))
    predicted = np.argmax(logits.values, axis=1)
    return float(np.mean(predicted == ds.labels))
