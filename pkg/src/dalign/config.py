"""Run configuration files and the run manifest.

A run config is JSON with a schema_version field, a "train" section that
maps 1:1 onto TrainConfig, "source"/"target" dataset sections (either a
file reference or a synthetic recipe), and an output directory.  Parsing
is strict: unknown keys and type mismatches name the offending field.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass

import numpy as np

from .data import (DomainDataset, SyntheticSpec, TableSchema, default_schema,
                   gen_gaussian_blobs, gen_two_moons, load_table)
from .errors import ParameterError, ParseError
from .trainer import TrainConfig

SCHEMA_VERSION = 1
TOOL_VERSION = "0.1.0"

_TRAIN_FIELDS = {
    "lr": float, "batch_size": int, "epochs": int, "beta": float,
    "gamma": float, "delta": float, "eta": float, "lambda_max": float,
    "temperature": float, "beta1": float, "beta2": float,
    "weight_decay": float, "eps": float, "seed": int,
    "conditioning_exact_limit": int, "conditioning_random_dim": int,
    "kernel_count": int, "kernel_step": float,
}

_SYNTH_FIELDS = {"generator", "n", "seed", "noise", "rotation_degrees",
                 "translation", "centers"}
_FILE_FIELDS = {"file", "feature_columns", "label_column", "delimiter",
                "class_count"}


@dataclass(frozen=True)
class DatasetSource:
    """Where one domain's data comes from: a file or a synthetic recipe."""

    kind: str  # "file" or "synthetic"
    spec: dict


@dataclass(frozen=True)
class RunConfig:
    train: TrainConfig
    source: DatasetSource
    target: DatasetSource
    output_dir: str


def _coerce(section: str, key: str, value, kind):
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ParseError(f"{section}.{key}: expected a number, "
                             f"got {value!r}")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ParseError(f"{section}.{key}: expected an integer, "
                             f"got {value!r}")
        return value
    return value


def _parse_train(obj: dict) -> TrainConfig:
    if not isinstance(obj, dict):
        raise ParseError("train: expected an object")
    kwargs = {}
    for key, value in obj.items():
        if key not in _TRAIN_FIELDS:
            raise ParseError(f"train.{key}: unknown field")
        kwargs[key] = _coerce("train", key, value, _TRAIN_FIELDS[key])
    try:
        return TrainConfig(**kwargs)
    except ParameterError as e:
        raise ParseError(f"train: {e}") from e


def _parse_dataset(section: str, obj) -> DatasetSource:
    if not isinstance(obj, dict):
        raise ParseError(f"{section}: expected an object")
    if "file" in obj:
        unknown = set(obj) - _FILE_FIELDS
        if unknown:
            raise ParseError(f"{section}.{sorted(unknown)[0]}: unknown field")
        return DatasetSource(kind="file", spec=dict(obj))
    if "generator" in obj:
        unknown = set(obj) - _SYNTH_FIELDS
        if unknown:
            raise ParseError(f"{section}.{sorted(unknown)[0]}: unknown field")
        return DatasetSource(kind="synthetic", spec=dict(obj))
    raise ParseError(f"{section}: needs either a 'file' or a 'generator' key")


def parse_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as e:
        raise ParseError(f"cannot open config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: line {e.lineno}, column {e.colno}: "
                         f"{e.msg}") from e
    if not isinstance(doc, dict):
        raise ParseError(f"{path}: top level must be an object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ParseError(f"{path}: schema_version must be {SCHEMA_VERSION}, "
                         f"got {version!r}")
    known = {"schema_version", "train", "source", "target", "output_dir"}
    unknown = set(doc) - known
    if unknown:
        raise ParseError(f"{path}: unknown top-level field "
                         f"{sorted(unknown)[0]!r}")
    for required in ("source", "target", "output_dir"):
        if required not in doc:
            raise ParseError(f"{path}: missing required field {required!r}")
    if not isinstance(doc["output_dir"], str):
        raise ParseError(f"{path}: output_dir must be a string")
    return RunConfig(
        train=_parse_train(doc.get("train", {})),
        source=_parse_dataset("source", doc["source"]),
        target=_parse_dataset("target", doc["target"]),
        output_dir=doc["output_dir"])


def synthetic_from_dict(section: str, obj: dict) -> tuple[SyntheticSpec, np.ndarray | None]:
    """Build a SyntheticSpec (plus blob centers when applicable) from the
    config dict, reporting bad fields by name."""
    try:
        spec = SyntheticSpec(
            generator=obj["generator"],
            n=int(obj["n"]),
            seed=int(obj["seed"]),
            noise=float(obj.get("noise", 0.1)),
            rotation_degrees=float(obj.get("rotation_degrees", 0.0)),
            translation=tuple(float(v) for v in obj.get("translation", ())))
    except KeyError as e:
        raise ParseError(f"{section}: missing synthetic field {e.args[0]!r}") from e
    except (TypeError, ValueError, ParameterError) as e:
        raise ParseError(f"{section}: bad synthetic spec: {e}") from e
    centers = None
    if spec.generator == "gaussian_blobs":
        if "centers" not in obj:
            raise ParseError(f"{section}: gaussian_blobs needs 'centers'")
        try:
            centers = np.asarray(obj["centers"], dtype=np.float64)
        except (TypeError, ValueError) as e:
            raise ParseError(f"{section}.centers: {e}") from e
    return spec, centers


def realize_dataset(section: str, src: DatasetSource,
                    domain_tag: str) -> DomainDataset:
    """Materialize one domain's dataset from its config section."""
    if src.kind == "synthetic":
        spec, centers = synthetic_from_dict(section, src.spec)
        if spec.generator == "two_moons":
            return gen_two_moons(spec, domain_tag=domain_tag)
        return gen_gaussian_blobs(spec, centers, domain_tag=domain_tag)
    obj = src.spec
    path = obj["file"]
    if not isinstance(path, str):
        raise ParseError(f"{section}.file: expected a string path")
    if "feature_columns" in obj:
        schema = TableSchema(
            feature_columns=tuple(obj["feature_columns"]),
            label_column=obj.get("label_column"),
            delimiter=obj.get("delimiter", ","))
    else:
        schema = default_schema(path, delimiter=obj.get("delimiter", ","))
    return load_table(path, schema, domain_tag=domain_tag,
                      class_count=obj.get("class_count"))


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def dataset_provenance(src: DatasetSource) -> dict:
    """What went into one domain: the synthetic recipe itself, or the file
    path plus its content hash."""
    if src.kind == "synthetic":
        return {"kind": "synthetic", "spec": src.spec}
    return {"kind": "file", "path": src.spec["file"],
            "sha256": file_sha256(src.spec["file"])}


def build_manifest(config_path: str, cfg: RunConfig) -> dict:
    return {
        "config_path": config_path,
        "resolved_train_config": asdict(cfg.train),
        "source": dataset_provenance(cfg.source),
        "target": dataset_provenance(cfg.target),
        "output_dir": cfg.output_dir,
        "tool_version": TOOL_VERSION,
    }


def write_manifest(manifest: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
