"""Command-line entry point.

Exit codes: 0 success, 2 input error (config/schema/parameter), 3 numeric
abort, 4 shape mismatch, 5 verification failure.  Report paths render
matplotlib figures next to the delimited outputs; --no-figures restores
pure data-file output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import checks, config as cfgmod, data, kernels, oracles, target_losses
from . import adversarial, autodiff as ad, trainer
from .autodiff import Tensor
from .errors import (DalignError, DomainError, NumericError, ParameterError,
                     ParseError, ShapeError)
from .models import load_checkpoint, save_checkpoint

METRICS_FIELDS = ("epoch", "clc", "dis", "im", "mcc", "mmd", "plmmd",
                  "composite", "source_accuracy", "target_accuracy")


def _metrics_record(m: trainer.EpochMetrics) -> str:
    doc = {k: getattr(m, k) for k in METRICS_FIELDS}
    return json.dumps(doc, sort_keys=True)


def cmd_train(args) -> int:
    run = cfgmod.parse_config(args.config)
    source = cfgmod.realize_dataset("source", run.source, "source")
    target = cfgmod.realize_dataset("target", run.target, "target")
    os.makedirs(run.output_dir, exist_ok=True)
    manifest = cfgmod.build_manifest(args.config, run)
    cfgmod.write_manifest(manifest, os.path.join(run.output_dir,
                                                 "manifest.json"))
    models, metrics = trainer.train(run.train, source, target)
    metrics_path = os.path.join(run.output_dir, "metrics.jsonl")
    with open(metrics_path, "w", encoding="utf-8") as fh:
        for m in metrics:
            fh.write(_metrics_record(m) + "\n")
    save_checkpoint(models, os.path.join(run.output_dir, "checkpoint.json"))
    if not args.no_figures:
        from . import figures
        figures.training_curves(metrics,
                                os.path.join(run.output_dir, "curves.png"))
    last = metrics[-1]
    print(f"trained {run.train.epochs} epochs; "
          f"source_accuracy={last.source_accuracy:.4f}"
          + (f" target_accuracy={last.target_accuracy:.4f}"
             if last.target_accuracy is not None else ""))
    print(f"outputs in {run.output_dir}")
    return 0


def cmd_eval(args) -> int:
    models = load_checkpoint(args.checkpoint)
    ds = data.load_table(args.dataset, data.default_schema(args.dataset),
                         domain_tag="target")
    if ds.labels is None:
        print("error: dataset has no label column, cannot evaluate",
              file=sys.stderr)
        return 4
    acc = trainer.evaluate(models, ds)
    print(f"{acc:.4f}")
    return 0


def _load_features(path: str) -> np.ndarray:
    ds = data.load_table(path, data.default_schema(path))
    return ds.features


def _load_labels(path: str) -> np.ndarray:
    schema = data.default_schema(path)
    if schema.label_column is None:
        raise ParseError(f"{path}: expected a 'label' column")
    ds = data.load_table(path, schema)
    return ds.labels


def _load_column(path: str) -> np.ndarray:
    feats = _load_features(path)
    if feats.shape[1] != 1:
        raise ShapeError(f"{path}: expected a single column, got "
                         f"{feats.shape[1]}")
    return feats[:, 0]


def cmd_losses(args) -> int:
    x_s = _load_features(args.features_source)
    y_s = _load_labels(args.labels_source)
    x_t = _load_features(args.features_target)
    logits_t = _load_features(args.logits_target)
    if x_s.shape[0] != y_s.shape[0]:
        raise ShapeError(f"{args.features_source} has {x_s.shape[0]} rows "
                         f"but {args.labels_source} has {y_s.shape[0]}")
    if x_t.shape[0] != logits_t.shape[0]:
        raise ShapeError(f"{args.features_target} has {x_t.shape[0]} rows "
                         f"but {args.logits_target} has {logits_t.shape[0]}")
    tc = trainer.TrainConfig() if args.config is None \
        else cfgmod.parse_config(args.config).train
    k = logits_t.shape[1]
    if y_s.size and y_s.max() >= k:
        raise ParseError(f"{args.labels_source}: label {y_s.max()} out of "
                         f"range for {k} logit columns")

    sigma = kernels.median_heuristic(x_s, x_t)
    kcfg = kernels.bandwidth_family(sigma, tc.kernel_count, tc.kernel_step)
    ts, tt, tl = Tensor(x_s), Tensor(x_t), Tensor(logits_t)

    mmd = kernels.mmd2_biased(ts, tt, kcfg).item()
    onehot = data.one_hot(y_s, k)
    probs_t = ad.softmax(tl, 1.0).values
    weights = kernels.plmmd_weights(onehot, probs_t)
    plmmd = kernels.plmmd(ts, tt, weights, kcfg).item()
    mcc = target_losses.mcc_loss(tl, tc.temperature).item()
    im = target_losses.im_loss(ad.softmax(tl, 1.0)).item()

    values = {"L_MMD": mmd, "L_PLMMD": plmmd, "L_MCC": mcc, "L_IM": im}
    # the oracle path recomputes everything downstream of the raw logits,
    # softmax included
    naive_probs = np.array([oracles.naive_softmax_row(row)
                            for row in logits_t])
    naive = {
        "L_MMD": oracles.naive_mmd2(x_s, x_t, kcfg.bandwidths),
        "L_PLMMD": oracles.naive_plmmd(x_s, x_t, onehot, naive_probs,
                                       kcfg.bandwidths),
        "L_MCC": oracles.naive_mcc(logits_t, tc.temperature),
        "L_IM": oracles.naive_im(naive_probs),
    }
    if (args.disc_source is None) != (args.disc_target is None):
        raise ParseError("--disc-source and --disc-target must be given "
                         "together")
    if args.disc_source is not None:
        d_s = _load_column(args.disc_source)
        d_t = _load_column(args.disc_target)
        values["L_dis"] = adversarial.domain_disc_loss(
            Tensor(d_s.reshape(-1, 1)), Tensor(d_t.reshape(-1, 1))).item()
        naive["L_dis"] = oracles.naive_disc(d_s, d_t)

    for name, value in values.items():
        print(f"{name} = {value!r}")
    if args.oracle:
        deviation = float(max(abs(values[k2] - naive[k2]) for k2 in values))
        print(f"oracle_max_abs_deviation = {deviation!r}")
    return 0


def cmd_gradcheck(args) -> int:
    report = checks.run_gradcheck_suite(seeds=args.seeds, step=args.step)
    failures = []
    for name in checks.LOSS_NAMES:
        err, seed = report[name]
        status = "ok" if err < checks.TOLERANCE else "FAIL"
        print(f"{name:6s} max_rel_err={err:.3e} seed={seed} {status}")
        if err >= checks.TOLERANCE:
            failures.append((name, seed))
    if failures:
        listing = ", ".join(f"{n} (seed {s})" for n, s in failures)
        print(f"gradcheck failed: {listing}", file=sys.stderr)
        return 5
    return 0


def cmd_gen_data(args) -> int:
    try:
        with open(args.spec_file, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as e:
        raise ParseError(f"cannot open {args.spec_file}: {e}") from e
    except json.JSONDecodeError as e:
        raise ParseError(f"{args.spec_file}: line {e.lineno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise ParseError(f"{args.spec_file}: top level must be an object")
    tag = doc.pop("domain_tag", "source")
    unknown = set(doc) - cfgmod._SYNTH_FIELDS
    if unknown:
        raise ParseError(f"{args.spec_file}: unknown field "
                         f"{sorted(unknown)[0]!r}")
    spec, centers = cfgmod.synthetic_from_dict(args.spec_file, doc)
    if spec.generator == "two_moons":
        ds = data.gen_two_moons(spec, domain_tag=tag)
    else:
        ds = data.gen_gaussian_blobs(spec, centers, domain_tag=tag)
    data.save_table(ds, args.out_path)
    print(f"wrote {ds.n} rows to {args.out_path}")
    return 0


def pca_embed(features: np.ndarray) -> np.ndarray:
    """Project rows onto the top-2 principal components.

    Sign convention: within each component the largest-magnitude loading
    is made positive, so the projection is deterministic.
    """
    if features.shape[1] < 2:
        raise ShapeError("embedding needs at least 2 feature dimensions")
    centered = features - features.mean(axis=0)
    cov = centered.T @ centered / features.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    components = eigvecs[:, np.argsort(eigvals)[::-1][:2]]
    for j in range(2):
        pivot = np.argmax(np.abs(components[:, j]))
        if components[pivot, j] < 0:
            components[:, j] = -components[:, j]
    return centered @ components


def cmd_embed(args) -> int:
    models = load_checkpoint(args.checkpoint)
    ds = data.load_table(args.dataset, data.default_schema(args.dataset),
                         domain_tag="target")
    if ds.n < 3:
        print(f"error: embedding needs at least 3 rows, got {ds.n}",
              file=sys.stderr)
        return 2
    feats = models.feature(Tensor(ds.features)).values
    coords = pca_embed(feats)
    with open(args.out_path, "w", encoding="utf-8", newline="") as fh:
        header = ["x", "y"] + (["label"] if ds.labels is not None else [])
        fh.write(",".join(header) + "\n")
        for i in range(ds.n):
            row = [repr(float(coords[i, 0])), repr(float(coords[i, 1]))]
            if ds.labels is not None:
                row.append(str(int(ds.labels[i])))
            fh.write(",".join(row) + "\n")
    if not args.no_figures:
        from . import figures
        stem, _ = os.path.splitext(args.out_path)
        figures.embedding_scatter(coords, ds.labels, stem + ".png")
    print(f"wrote {ds.n} embedded rows to {args.out_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dalign",
        description="Adversarial domain adaptation with kernel and "
                    "class-confusion losses.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the full training loop")
    p.add_argument("config", help="run configuration JSON")
    p.add_argument("--no-figures", action="store_true",
                   help="write data files only, no PNG figures")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy of a checkpoint on a dataset")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("losses", help="compute every loss on supplied files")
    p.add_argument("features_source")
    p.add_argument("labels_source")
    p.add_argument("features_target")
    p.add_argument("logits_target")
    p.add_argument("config", nargs="?", default=None,
                   help="optional run config for temperature/kernel settings")
    p.add_argument("--disc-source", default=None,
                   help="file of discriminator outputs on source rows")
    p.add_argument("--disc-target", default=None,
                   help="file of discriminator outputs on target rows")
    p.add_argument("--oracle", action="store_true",
                   help="recompute each loss with naive double loops and "
                        "print the max absolute deviation")
    p.set_defaults(func=cmd_losses)

    p = sub.add_parser("gradcheck", help="finite-difference check of every loss")
    p.add_argument("--seeds", type=int, default=checks.DEFAULT_SEEDS)
    p.add_argument("--step", type=float, default=checks.DEFAULT_STEP)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset file")
    p.add_argument("spec_file", help="synthetic spec JSON")
    p.add_argument("out_path")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("embed", help="export a 2-D PCA embedding of features")
    p.add_argument("checkpoint")
    p.add_argument("dataset")
    p.add_argument("out_path")
    p.add_argument("--no-figures", action="store_true",
                   help="write the coordinate file only, no PNG scatter")
    p.set_defaults(func=cmd_embed)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ParseError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except ShapeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except (ParameterError, DomainError, DalignError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
