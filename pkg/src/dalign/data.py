"""Datasets, synthetic generators, delimited file I/O, and batching.

Files are comma-separated with a mandatory header.  Feature columns are
written with Python's repr so a save/load round trip reproduces every
float bit-exactly.  All randomness flows through seeded PCG64 generators
(numpy default_rng), making every generator a pure function of its spec.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ParseError, ShapeError

DOMAIN_TAGS = ("source", "target")
STD_EPS = 1e-12


@dataclass
class DomainDataset:
    """Feature matrix with optional integer labels and a domain tag.

    Target labels, when present, exist for evaluation only; the trainer
    consumes a label-stripped view of the target domain.
    """

    features: np.ndarray
    labels: np.ndarray | None
    domain_tag: str
    class_count: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise ShapeError(f"features must be (n, d), got {self.features.shape}")
        if self.domain_tag not in DOMAIN_TAGS:
            raise ParameterError(f"domain_tag must be one of {DOMAIN_TAGS}, "
                                 f"got {self.domain_tag!r}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)
            if self.labels.shape != (self.features.shape[0],):
                raise ShapeError("labels must be one integer per row")
            if self.labels.size and (self.labels.min() < 0
                                     or self.labels.max() >= self.class_count):
                raise ParameterError("label outside [0, class_count)")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def without_labels(self) -> "DomainDataset":
        return DomainDataset(self.features, None, self.domain_tag,
                             self.class_count)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a generated dataset; output is a pure function of it."""

    generator: str  # "two_moons" or "gaussian_blobs"
    n: int
    seed: int
    noise: float = 0.1
    rotation_degrees: float = 0.0
    translation: tuple[float, ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"n must be >= 1, got {self.n}")
        if self.noise < 0.0:
            raise ParameterError(f"noise must be >= 0, got {self.noise}")
        if self.generator not in ("two_moons", "gaussian_blobs"):
            raise ParameterError(f"unknown generator {self.generator!r}")


def rotation_matrix(degrees: float) -> np.ndarray:
    """Counter-clockwise rotation of the plane: at 90 degrees the point
    (1, 0) maps to (0, 1)."""
    t = np.deg2rad(degrees)
    return np.array([[np.cos(t), -np.sin(t)],
                     [np.sin(t), np.cos(t)]])


def _transform(pts: np.ndarray, rotation_degrees: float,
               translation: tuple[float, ...]) -> np.ndarray:
    """Rotate about the origin (first two coordinates), then translate."""
    if rotation_degrees != 0.0 and pts.shape[1] >= 2:
        rot = rotation_matrix(rotation_degrees)
        pts = pts.copy()
        pts[:, :2] = pts[:, :2] @ rot.T
    if len(translation):
        tr = np.asarray(translation, dtype=np.float64)
        if tr.shape != (pts.shape[1],):
            raise ParameterError(f"translation must have {pts.shape[1]} "
                                 f"entries, got {len(translation)}")
        pts = pts + tr
    return pts


def gen_two_moons(spec: SyntheticSpec,
                  domain_tag: str = "source") -> DomainDataset:
    """Two interleaved half-circles with Gaussian noise.

    Class 0 is the upper arc centred at the origin, class 1 the lower arc
    shifted right and down; class counts differ by at most one.  Noise is
    added first, then the rotation about the origin, then the translation.
    """
    if spec.generator != "two_moons":
        raise ParameterError(f"spec.generator is {spec.generator!r}")
    n = spec.n
    n0 = n // 2 + n % 2
    n1 = n // 2
    t0 = np.linspace(0.0, np.pi, n0)
    t1 = np.linspace(0.0, np.pi, max(n1, 1))[:n1]
    upper = np.stack([np.cos(t0), np.sin(t0)], axis=1)
    lower = np.stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)], axis=1)
    pts = np.concatenate([upper, lower], axis=0)
    labels = np.concatenate([np.zeros(n0, dtype=int), np.ones(n1, dtype=int)])
    if spec.noise > 0.0:
        rng = np.random.default_rng(spec.seed)
        pts = pts + rng.normal(0.0, spec.noise, size=pts.shape)
    pts = _transform(pts, spec.rotation_degrees, spec.translation)
    return DomainDataset(pts, labels, domain_tag, class_count=2)


def gen_gaussian_blobs(spec: SyntheticSpec, centers: np.ndarray,
                       domain_tag: str = "source") -> DomainDataset:
    """Isotropic Gaussian clusters (std = spec.noise) at the given K x d
    centers; the first n % K classes receive one extra example.  Rotation
    acts on the first two coordinates; higher dimensions pass through.
    """
    if spec.generator != "gaussian_blobs":
        raise ParameterError(f"spec.generator is {spec.generator!r}")
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim != 2:
        raise ShapeError(f"centers must be (K, d), got {centers.shape}")
    k = centers.shape[0]
    if k < 1:
        raise ParameterError("need at least one center")
    n = spec.n
    counts = [n // k + (1 if c < n % k else 0) for c in range(k)]
    rng = np.random.default_rng(spec.seed)
    feats, labels = [], []
    for c, cnt in enumerate(counts):
        offset = rng.normal(0.0, spec.noise, size=(cnt, centers.shape[1])) \
            if spec.noise > 0.0 else np.zeros((cnt, centers.shape[1]))
        feats.append(centers[c] + offset)
        labels.append(np.full(cnt, c, dtype=int))
    pts = np.concatenate(feats, axis=0)
    pts = _transform(pts, spec.rotation_degrees, spec.translation)
    return DomainDataset(pts, np.concatenate(labels), domain_tag,
                         class_count=k)


# ---------------------------------------------------------------------------
# delimited file I/O


@dataclass(frozen=True)
class TableSchema:
    """Which columns of a delimited file are features, and optionally which
    one holds integer labels."""

    feature_columns: tuple[str, ...]
    label_column: str | None = None
    delimiter: str = ","


def save_table(ds: DomainDataset, path: str) -> None:
    """Write features (and the label column when present) with a header.
    Floats are rendered with repr for exact round-tripping."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        header = [f"x{i}" for i in range(ds.dim)]
        if ds.labels is not None:
            header.append("label")
        writer.writerow(header)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.features[i]]
            if ds.labels is not None:
                row.append(str(int(ds.labels[i])))
            writer.writerow(row)


def default_schema(path: str, delimiter: str = ",") -> TableSchema:
    """Infer a schema from the header alone: a trailing "label" column is
    the label, everything else is a feature."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            header = next(csv.reader(fh, delimiter=delimiter), None)
    except OSError as e:
        raise ParseError(f"cannot open {path}: {e}") from e
    if not header:
        raise ParseError(f"{path}: empty file, header required")
    has_label = header[-1].strip() == "label"
    feats = tuple(header[:-1] if has_label else header)
    return TableSchema(feature_columns=feats,
                       label_column="label" if has_label else None,
                       delimiter=delimiter)


def load_table(path: str, schema: TableSchema, domain_tag: str = "source",
               class_count: int | None = None) -> DomainDataset:
    """Read a delimited file against the schema.

    Parse failures (ragged rows, non-numeric cells, out-of-range labels)
    raise with the offending row number.  A header-only file is a valid
    empty dataset.  When class_count is omitted it is inferred as
    max(label)+1, or 0 for unlabeled data.
    """
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as e:
        raise ParseError(f"cannot open {path}: {e}") from e
    with fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        try:
            header = [c.strip() for c in next(reader)]
        except StopIteration:
            raise ParseError(f"{path}: empty file, header required") from None
        col_index = {name: i for i, name in enumerate(header)}
        missing = [c for c in schema.feature_columns if c not in col_index]
        if missing:
            raise ParseError(f"{path}: feature column(s) {missing} not in "
                             f"header {header}")
        if schema.label_column is not None and schema.label_column not in col_index:
            raise ParseError(f"{path}: declared label column "
                             f"{schema.label_column!r} not in header")
        feat_idx = [col_index[c] for c in schema.feature_columns]
        label_idx = col_index.get(schema.label_column) \
            if schema.label_column is not None else None
        feats, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(f"{path}:{lineno}: expected {len(header)} "
                                 f"fields, got {len(row)}")
            try:
                feats.append([float(row[i]) for i in feat_idx])
            except ValueError as e:
                raise ParseError(f"{path}:{lineno}: bad float: {e}") from e
            if label_idx is not None:
                try:
                    labels.append(int(row[label_idx]))
                except ValueError as e:
                    raise ParseError(f"{path}:{lineno}: bad label: {e}") from e
    features = np.asarray(feats, dtype=np.float64).reshape(
        len(feats), len(feat_idx))
    lab = np.asarray(labels, dtype=int) if label_idx is not None else None
    if class_count is None:
        class_count = int(lab.max()) + 1 if lab is not None and lab.size else 0
    try:
        return DomainDataset(features, lab, domain_tag, class_count)
    except (ShapeError, ParameterError) as e:
        raise ParseError(f"{path}: {e}") from e


# ---------------------------------------------------------------------------
# normalization and batching


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray


def zscore_normalize(ds: DomainDataset,
                     stats: NormStats | None = None) -> tuple[DomainDataset, NormStats]:
    """Column-wise (x - mean) / max(eps, std).  Stats computed over the
    source must be reused for the target by passing them back in."""
    if stats is None:
        mean = ds.features.mean(axis=0)
        std = ds.features.std(axis=0)
        stats = NormStats(mean=mean, std=std)
    scaled = (ds.features - stats.mean) / np.maximum(STD_EPS, stats.std)
    out = DomainDataset(scaled, ds.labels, ds.domain_tag, ds.class_count)
    return out, stats


def one_hot(labels: np.ndarray, class_count: int) -> np.ndarray:
    """Dense one-hot matrix from integer class indices."""
    labels = np.asarray(labels, dtype=int)
    if labels.ndim != 1:
        raise ShapeError(f"labels must be 1-D, got {labels.shape}")
    if class_count < 1:
        raise ParameterError(f"class_count must be >= 1, got {class_count}")
    if labels.size and (labels.min() < 0 or labels.max() >= class_count):
        raise ParameterError("label outside [0, class_count)")
    out = np.zeros((labels.shape[0], class_count))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def batch_iter(ds: DomainDataset, batch_size: int, seed: int,
               epoch: int) -> list[np.ndarray]:
    """Shuffled index batches for one epoch; the final short batch is kept.

    The permutation depends only on (seed, epoch), so every run of the same
    configuration walks the data in the same order.
    """
    if batch_size < 1:
        raise ParameterError(f"batch_size must be >= 1, got {batch_size}")
    if ds.n < 1:
        raise ShapeError("cannot batch an empty dataset")
    perm = np.random.default_rng([seed, epoch]).permutation(ds.n)
    return [perm[i:i + batch_size] for i in range(0, ds.n, batch_size)]


class Cycler:
    """Endless walk over per-epoch batches of one dataset.

    The trainer steps as many times as the larger domain needs; the smaller
    domain recycles through reshuffled epochs of its own.
    """

    def __init__(self, ds: DomainDataset, batch_size: int, seed: int):
        self.ds = ds
        self.batch_size = batch_size
        self.seed = seed
        self._epoch = 0
        self._queue: list[np.ndarray] = []

    def next_batch(self) -> np.ndarray:
        if not self._queue:
            self._queue = batch_iter(self.ds, self.batch_size, self.seed,
                                     self._epoch)
            self._epoch += 1
        return self._queue.pop(0)
