"""Adversarial domain adaptation with kernel and class-confusion losses,
on a small reverse-mode autodiff core."""

from .autodiff import Tensor, backward, grad_reverse, gradcheck, softmax, tensor
from .adversarial import (ConditioningMap, cdan_adversarial_loss,
                          domain_disc_loss, make_conditioning_map,
                          multilinear_map, randomized_multilinear)
from .data import (DomainDataset, SyntheticSpec, TableSchema, batch_iter,
                   gen_gaussian_blobs, gen_two_moons, load_table, one_hot,
                   save_table, zscore_normalize)
from .kernels import (KernelConfig, WeightTriple, bandwidth_family,
                      gaussian_gram, median_heuristic, mmd2_biased, plmmd,
                      plmmd_weights)
from .models import (MLPSpec, Model, Models, forward, init_model, init_models,
                     load_checkpoint, save_checkpoint)
from .target_losses import (ConfusionMatrix, confusion_matrix, entropy,
                            im_loss, mcc_loss, uncertainty_weights)
from .trainer import (DomainBatch, EpochMetrics, TrainConfig,
                      classification_loss, composite_loss, evaluate,
                      lambda_schedule, optimizer_step, pseudo_labels, train)
from .errors import (DalignError, DomainError, NumericError, ParameterError,
                     ParseError, ShapeError)

__version__ = "0.1.0"

__all__ = [
    "Tensor", "backward", "grad_reverse", "gradcheck", "softmax", "tensor",
    "ConditioningMap", "cdan_adversarial_loss", "domain_disc_loss",
    "make_conditioning_map", "multilinear_map", "randomized_multilinear",
    "DomainDataset", "SyntheticSpec", "TableSchema", "batch_iter",
    "gen_gaussian_blobs", "gen_two_moons", "load_table", "one_hot",
    "save_table", "zscore_normalize",
    "KernelConfig", "WeightTriple", "bandwidth_family", "gaussian_gram",
    "median_heuristic", "mmd2_biased", "plmmd", "plmmd_weights",
    "MLPSpec", "Model", "Models", "forward", "init_model", "init_models",
    "load_checkpoint", "save_checkpoint",
    "ConfusionMatrix", "confusion_matrix", "entropy", "im_loss", "mcc_loss",
    "uncertainty_weights",
    "DomainBatch", "EpochMetrics", "TrainConfig", "classification_loss",
    "composite_loss", "evaluate", "lambda_schedule", "optimizer_step",
    "pseudo_labels", "train",
    "DalignError", "DomainError", "NumericError", "ParameterError",
    "ParseError", "ShapeError",
    "__version__",
]
