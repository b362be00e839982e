"""Seeded multilayer perceptrons and their serialized form.

A Model is one network: an affine stack with ReLU between layers and an
optional sigmoid after the last.  Three of them cooperate during training
(the feature extractor F, the classifier head N, the domain discriminator
D), bundled in a Models triple.

Checkpoints are JSON with parameter arrays encoded as base64 little-endian
float64 bytes, so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ParameterError, ParseError, ShapeError

CHECKPOINT_FORMAT_VERSION = 1
FINAL_ACTIVATIONS = ("none", "sigmoid")


@dataclass(frozen=True)
class MLPSpec:
    """Architecture of one network: layer_widths[0] is the input width,
    layer_widths[-1] the output width; ReLU between affine layers and an
    optional activation after the last one."""

    layer_widths: tuple[int, ...]
    final_activation: str = "none"

    def __post_init__(self):
        if len(self.layer_widths) < 2:
            raise ParameterError("an MLP needs at least input and output widths")
        for w in self.layer_widths:
            if int(w) < 1:
                raise ParameterError(f"layer width must be >= 1, got {w}")
        if self.final_activation not in FINAL_ACTIVATIONS:
            raise ParameterError(
                f"final_activation must be one of {FINAL_ACTIVATIONS}, "
                f"got {self.final_activation!r}")


class Model:
    """One MLP: spec, seed, and the parameter tensors it was built from.

    `named_parameters` yields stable dotted names ("F.layer0.weight", ...)
    so optimizers, diagnostics, and checkpoints can address parameters.
    """

    def __init__(self, spec: MLPSpec, seed: int, name: str,
                 weights: list[Tensor], biases: list[Tensor]):
        self.spec = spec
        self.seed = seed
        self.name = name
        self.weights = weights
        self.biases = biases

    def __call__(self, x: Tensor) -> Tensor:
        return forward(self, x)

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.append((f"{self.name}.layer{i}.weight", w))
            out.append((f"{self.name}.layer{i}.bias", b))
        return out

    @property
    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]


def init_model(spec: MLPSpec, seed: int, name: str = "model") -> Model:
    """Xavier-uniform weights, +-sqrt(6 / (fan_in + fan_out)); zero biases.

    Layers are drawn in order from one generator, so identical (spec, seed)
    always yields bit-identical parameters.
    """
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    widths = spec.layer_widths
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        weights.append(Tensor(w, requires_grad=True))
        biases.append(Tensor(np.zeros((1, fan_out)), requires_grad=True))
    return Model(spec, seed, name, weights, biases)


def forward(model: Model, x: Tensor) -> Tensor:
    """Affine -> ReLU chain per spec, final activation applied last."""
    if x.values.ndim != 2:
        raise ShapeError(f"{model.name}: input must be (n, d), got {x.shape}")
    if x.shape[1] != model.spec.layer_widths[0]:
        raise ShapeError(f"{model.name}: input width {x.shape[1]} does not "
                         f"match spec {model.spec.layer_widths[0]}")
    h = x
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        h = ad.add(ad.matmul(h, w), b)
        if i < last:
            h = ad.relu(h)
    if model.spec.final_activation == "sigmoid":
        h = ad.sigmoid(h)
    return h


@dataclass
class Models:
    """The three cooperating networks plus the base seed that derived them.

    `conditioning` holds the map the adversarial term conditions the
    discriminator input on; the trainer installs it after construction.
    """

    feature: Model
    classifier: Model
    discriminator: Model
    seed: int
    class_count: int
    conditioning: object | None = None

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return (self.feature.named_parameters()
                + self.classifier.named_parameters()
                + self.discriminator.named_parameters())

    def predict_logits(self, x: Tensor) -> Tensor:
        return self.classifier(self.feature(x))


def default_feature_spec(input_dim: int) -> MLPSpec:
    return MLPSpec((input_dim, 64, 32))


def default_classifier_spec(class_count: int) -> MLPSpec:
    return MLPSpec((32, class_count))


def default_discriminator_spec(cond_dim: int) -> MLPSpec:
    return MLPSpec((cond_dim, 64, 1), final_activation="sigmoid")


def init_models(input_dim: int, class_count: int, cond_dim: int,
                seed: int) -> Models:
    """Build F, N, D from the default shapes.  Each network gets its own
    derived seed (seed, seed+1, seed+2), so adding or removing one cannot
    shift the others' initial weights."""
    if class_count < 2:
        raise ParameterError(f"class_count must be >= 2, got {class_count}")
    f = init_model(default_feature_spec(input_dim), seed, name="F")
    n = init_model(default_classifier_spec(class_count), seed + 1, name="N")
    d = init_model(default_discriminator_spec(cond_dim), seed + 2, name="D")
    return Models(feature=f, classifier=n, discriminator=d, seed=seed,
                  class_count=class_count)


# ---------------------------------------------------------------------------
# checkpoint serialization


def _encode_array(arr: np.ndarray) -> dict:
    data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
    return {"shape": list(arr.shape),
            "data": base64.b64encode(data).decode("ascii")}


def _decode_array(obj: dict, name: str) -> np.ndarray:
    try:
        shape = tuple(int(s) for s in obj["shape"])
        raw = base64.b64decode(obj["data"].encode("ascii"), validate=True)
        arr = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    except (KeyError, ValueError, TypeError) as e:
        raise ParseError(f"checkpoint parameter {name!r} is malformed: {e}") from e
    return arr


def _spec_to_dict(model: Model) -> dict:
    return {"layer_widths": list(model.spec.layer_widths),
            "final_activation": model.spec.final_activation,
            "seed": model.seed}


def save_checkpoint(models: Models, path: str) -> None:
    doc = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "seed": models.seed,
        "class_count": models.class_count,
        "specs": {
            "F": _spec_to_dict(models.feature),
            "N": _spec_to_dict(models.classifier),
            "D": _spec_to_dict(models.discriminator),
        },
        "parameters": {name: _encode_array(t.values)
                       for name, t in models.named_parameters()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_checkpoint(path: str) -> Models:
    """Rebuild the model triple from its JSON checkpoint, bit-exactly."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ParseError(f"cannot read checkpoint {path}: {e}") from e
    if not isinstance(doc, dict) or doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise ParseError(f"checkpoint {path}: unsupported or missing "
                         f"format_version (expected {CHECKPOINT_FORMAT_VERSION})")
    try:
        nets = {}
        for name in ("F", "N", "D"):
            s = doc["specs"][name]
            spec = MLPSpec(tuple(int(w) for w in s["layer_widths"]),
                           final_activation=s["final_activation"])
            widths = spec.layer_widths
            weights, biases = [], []
            for i in range(len(widths) - 1):
                w = _decode_array(doc["parameters"][f"{name}.layer{i}.weight"],
                                  f"{name}.layer{i}.weight")
                b = _decode_array(doc["parameters"][f"{name}.layer{i}.bias"],
                                  f"{name}.layer{i}.bias")
                if w.shape != (widths[i], widths[i + 1]) or b.shape != (1, widths[i + 1]):
                    raise ParseError(f"checkpoint {path}: parameter shape "
                                     f"mismatch in {name}.layer{i}")
                weights.append(Tensor(w, requires_grad=True))
                biases.append(Tensor(b, requires_grad=True))
            nets[name] = Model(spec, int(s["seed"]), name, weights, biases)
        return Models(feature=nets["F"], classifier=nets["N"],
                      discriminator=nets["D"], seed=int(doc["seed"]),
                      class_count=int(doc["class_count"]))
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"checkpoint {path} is malformed: {e}") from e
