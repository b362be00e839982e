"""Acceptance suite: the eight stated requirements exercised end to end,
one pass/fail line per criterion.

Reference values for the adaptation experiments live in tests/golden/ and
are written on the first run, then compared exactly (counts) or within the
stated tolerance (accuracies) on every later run.
"""

import json
import math
import os
import time

import numpy as np
import pytest

from dalign import autodiff as ad
from dalign import adversarial, checks, cli, data, kernels, models
from dalign import target_losses, trainer
from dalign.autodiff import Tensor

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")

SOURCE_SPEC = data.SyntheticSpec(generator="two_moons", n=1000, seed=0,
                                 noise=0.1)
TARGET_SPEC = data.SyntheticSpec(generator="two_moons", n=1000, seed=1,
                                 noise=0.1, rotation_degrees=45.0)


def _report(num, ok, detail):
    print(f"criterion {num}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {num} failed: {detail}"


def _golden(name, computed):
    """Return (reference, first_run).  The reference is written from the
    computed values the first time and loaded from disk afterwards."""
    path = os.path.join(GOLDEN_DIR, name)
    if not os.path.exists(path):
        os.makedirs(GOLDEN_DIR, exist_ok=True)
        with open(path, "w") as fh:
            json.dump(computed, fh, indent=1, sort_keys=True)
            fh.write("\n")
        return computed, True
    with open(path) as fh:
        return json.load(fh), False


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) if isinstance(v, float)
                              else str(v) for v in row) + "\n")
    return str(path)


def _adaptation_pair():
    source = data.gen_two_moons(SOURCE_SPEC)
    target = data.gen_two_moons(TARGET_SPEC, "target")
    return source, target


def test_criterion_1_gradcheck_every_loss():
    """All six losses composed with a 2-layer MLP pass finite-difference
    verification over 20 seeds, worst relative error below 1e-4, within
    two minutes."""
    t0 = time.perf_counter()
    report = checks.run_gradcheck_suite(seeds=20)
    elapsed = time.perf_counter() - t0
    worst_name = max(report, key=lambda k: report[k][0])
    worst_err = report[worst_name][0]
    ok = all(err < checks.TOLERANCE for err, _ in report.values()) \
        and elapsed < 120.0
    _report(1, ok, f"worst {worst_name} rel_err={worst_err:.3e}, "
                   f"{elapsed:.1f}s")


def test_criterion_2_oracle_equivalence_via_cli(tmp_path, capsys):
    """50 random fixtures through the command-line oracle path: the
    vectorized losses agree with naive double-loop recomputation to 1e-9."""
    worst = 0.0
    for i in range(50):
        rng = np.random.default_rng(i)
        n_s = int(rng.integers(3, 33))
        n_t = int(rng.integers(3, 33))
        d = int(rng.integers(1, 17))
        k = int(rng.integers(2, 7))
        x_s = rng.normal(size=(n_s, d))
        x_t = rng.normal(size=(n_t, d)) + rng.normal(scale=0.5, size=d)
        labels = rng.integers(0, k, size=n_s)
        logits = rng.normal(scale=2.0, size=(n_t, k))

        cols = [f"x{j}" for j in range(d)]
        fs = _write_csv(tmp_path / f"fs{i}.csv", cols,
                        [[float(v) for v in r] for r in x_s])
        ls = _write_csv(tmp_path / f"ls{i}.csv", ["label"],
                        [[int(v)] for v in labels])
        ft = _write_csv(tmp_path / f"ft{i}.csv", cols,
                        [[float(v) for v in r] for r in x_t])
        lt = _write_csv(tmp_path / f"lt{i}.csv",
                        [f"x{j}" for j in range(k)],
                        [[float(v) for v in r] for r in logits])
        argv = ["losses", fs, ls, ft, lt, "--oracle"]
        if i % 2 == 1:
            ds = _write_csv(tmp_path / f"ds{i}.csv", ["x0"],
                            [[float(v)] for v in
                             rng.uniform(0.05, 0.95, size=n_s)])
            dt = _write_csv(tmp_path / f"dt{i}.csv", ["x0"],
                            [[float(v)] for v in
                             rng.uniform(0.05, 0.95, size=n_t)])
            argv += ["--disc-source", ds, "--disc-target", dt]
        assert cli.main(argv) == 0
        last = capsys.readouterr().out.strip().splitlines()[-1]
        assert last.startswith("oracle_max_abs_deviation = ")
        worst = max(worst, float(last.partition(" = ")[2]))
    _report(2, worst < 1e-9, f"max deviation over 50 fixtures = {worst!r}")


def test_criterion_3_closed_form_spot_values():
    """Hand-derivable values: self-MMD, the single-pair kernel identity,
    uniform class confusion, the two IM endpoints, and the chance-level
    discriminator."""
    failures = []

    rng = np.random.default_rng(0)
    x = rng.normal(size=(6, 3))
    self_mmd = kernels.mmd2_biased(Tensor(x), Tensor(x),
                                   kernels.default_config(x, x)).item()
    if not abs(self_mmd) < 1e-12:
        failures.append(f"self-MMD {self_mmd!r}")

    single = kernels.mmd2_biased(Tensor([[0.0]]), Tensor([[1.0]]),
                                 kernels.KernelConfig((1.0,))).item()
    if not abs(single - (2.0 - 2.0 * math.exp(-0.5))) <= 1e-12:
        failures.append(f"single-pair MMD {single!r}")

    mcc = target_losses.mcc_loss(Tensor(np.zeros((5, 2)))).item()
    if not abs(mcc - 0.5) <= 1e-12:
        failures.append(f"uniform MCC {mcc!r}")

    im_same = target_losses.im_loss(
        Tensor(np.tile([[0.7, 0.2, 0.1]], (6, 1)))).item()
    if not abs(im_same) <= 1e-12:
        failures.append(f"IM on identical rows {im_same!r}")

    im_onehot = target_losses.im_loss(
        Tensor(np.tile(np.eye(4), (3, 1)))).item()
    if not abs(im_onehot - (-math.log(4.0))) <= 1e-9:
        failures.append(f"IM on balanced one-hots {im_onehot!r}")

    disc = adversarial.domain_disc_loss(Tensor(np.full((4, 1), 0.5)),
                                        Tensor(np.full((4, 1), 0.5))).item()
    if not abs(disc - 2.0 * math.log(2.0)) <= 1e-12:
        failures.append(f"chance discriminator {disc!r}")

    _report(3, not failures,
            "; ".join(failures) if failures else "6 spot values exact")


def test_criterion_4_weighted_mmd_structure():
    """100 random instances: weight matrices nonnegative and normalized,
    the weighted statistic bounded below by -1e-10, and the K=1 case
    reducing to the plain statistic within 1e-10."""
    worst_sum = 0.0
    worst_floor = 0.0
    worst_reduction = 0.0
    for i in range(100):
        rng = np.random.default_rng(1000 + i)
        k = int(rng.integers(2, 7))
        n_s = int(rng.integers(k, 20))
        n_t = int(rng.integers(3, 20))
        d = int(rng.integers(1, 6))
        # every class present on the source side
        labels = np.concatenate([np.arange(k),
                                 rng.integers(0, k, size=n_s - k)])
        onehot = data.one_hot(labels, k)
        raw = rng.uniform(0.1, 1.0, size=(n_t, k))
        probs = raw / raw.sum(axis=1, keepdims=True)
        w = kernels.plmmd_weights(onehot, probs)

        assert w.common_classes == k
        for block in (w.w_xx, w.w_xy, w.w_yy):
            assert np.all(block >= 0.0)
            worst_sum = max(worst_sum, abs(block.sum() - 1.0))

        x_s = rng.normal(size=(n_s, d))
        x_t = rng.normal(size=(n_t, d)) + 0.3
        kcfg = kernels.default_config(x_s, x_t)
        value = kernels.plmmd(Tensor(x_s), Tensor(x_t), w, kcfg).item()
        worst_floor = min(worst_floor, value)

        single = np.ones((n_s, 1)), np.ones((n_t, 1))
        w1 = kernels.plmmd_weights(*single)
        reduced = kernels.plmmd(Tensor(x_s), Tensor(x_t), w1, kcfg).item()
        plain = kernels.mmd2_biased(Tensor(x_s), Tensor(x_t), kcfg).item()
        worst_reduction = max(worst_reduction, abs(reduced - plain))

    ok = worst_sum <= 1e-9 and worst_floor >= -1e-10 \
        and worst_reduction <= 1e-10
    _report(4, ok, f"weight-sum dev {worst_sum:.2e}, floor {worst_floor!r}, "
                   f"K=1 reduction dev {worst_reduction:.2e}")


def test_criterion_5_degeneration_to_source_training():
    """With every transfer coefficient at zero the full loop reproduces a
    plain source-classifier loop bit for bit, and the discriminator never
    moves off its initialization."""
    cfg = trainer.TrainConfig(lr=0.01, batch_size=16, epochs=3, beta=0.0,
                              gamma=0.0, delta=0.0, eta=0.0, lambda_max=0.0,
                              seed=0)
    source = data.gen_two_moons(
        data.SyntheticSpec(generator="two_moons", n=48, seed=0))
    target = data.gen_two_moons(
        data.SyntheticSpec(generator="two_moons", n=40, seed=1,
                           rotation_degrees=45.0), "target")
    full_models, history = trainer.train(cfg, source, target)

    ref = trainer.build_models(cfg, source.dim, source.class_count)
    state = trainer.AdamWState()
    cycler = data.Cycler(source, cfg.batch_size, cfg.seed)
    n_steps = trainer.steps_per_epoch(source.n, target.n, cfg.batch_size)
    mismatches = []
    global_step = 0
    for epoch in range(cfg.epochs):
        total = 0.0
        for _ in range(n_steps):
            idx = cycler.next_batch()
            logits = ref.classifier(ref.feature(Tensor(source.features[idx])))
            loss = trainer.classification_loss(logits, source.labels[idx])
            trainer.zero_grads(ref)
            ad.backward(loss)
            trainer.optimizer_step(ref, state, cfg, global_step)
            global_step += 1
            total += loss.item()
        if history[epoch].clc != total / n_steps:
            mismatches.append(f"epoch {epoch} clc")
        if history[epoch].source_accuracy != trainer.evaluate(ref, source):
            mismatches.append(f"epoch {epoch} accuracy")

    ref_params = dict(ref.feature.named_parameters()
                      + ref.classifier.named_parameters())
    for name, t in (full_models.feature.named_parameters()
                    + full_models.classifier.named_parameters()):
        if not np.array_equal(t.values, ref_params[name].values):
            mismatches.append(name)

    fresh = trainer.build_models(cfg, source.dim, source.class_count)
    for (name, t), (_, f) in zip(full_models.discriminator.named_parameters(),
                                 fresh.discriminator.named_parameters()):
        if not np.array_equal(t.values, f.values):
            mismatches.append(f"{name} moved")

    _report(5, not mismatches,
            "; ".join(mismatches) if mismatches
            else f"{cfg.epochs} epochs bit-identical, discriminator frozen")


def test_criterion_6_adaptation_gain():
    """The composite objective lifts rotated-moons target accuracy by at
    least 10 points over source-only training, matching the pinned
    reference within half a point, in under five minutes."""
    t0 = time.perf_counter()
    source, target = _adaptation_pair()
    base_cfg = trainer.TrainConfig(lr=0.01, epochs=20, seed=0, beta=0.0,
                                   gamma=0.0, delta=0.0, eta=0.0,
                                   lambda_max=0.0)
    full_cfg = trainer.TrainConfig(lr=0.01, epochs=20, seed=0, beta=0.05,
                                   gamma=1.4, delta=0.54, eta=0.54,
                                   lambda_max=1.0)
    _, base_history = trainer.train(base_cfg, source, target)
    _, full_history = trainer.train(full_cfg, source, target)
    elapsed = time.perf_counter() - t0

    baseline = base_history[-1].target_accuracy
    composite = full_history[-1].target_accuracy
    computed = {"baseline_target_accuracy": baseline,
                "composite_target_accuracy": composite}
    reference, first_run = _golden("adaptation.json", computed)

    gain = composite - baseline
    ok = (gain >= 0.10 and elapsed < 300.0
          and abs(baseline - reference["baseline_target_accuracy"]) <= 0.005
          and abs(composite - reference["composite_target_accuracy"]) <= 0.005)
    _report(6, ok, f"baseline {baseline:.3f}, composite {composite:.3f}, "
                   f"gain {gain * 100:.1f} pts, {elapsed:.1f}s"
                   + (" (reference written)" if first_run else ""))


def test_criterion_7_weighted_term_speeds_convergence():
    """Across five seeds, the run with the weighted kernel term reaches 90%
    of its own final target accuracy no later than the run without it, and
    strictly earlier on at least three seeds; the per-seed epoch counts are
    pinned."""
    source, target = _adaptation_pair()

    def first_reach(history, bar):
        for m in history:
            if m.target_accuracy >= bar:
                return m.epoch
        return len(history)

    per_seed = []
    for seed in range(5):
        on_cfg = trainer.TrainConfig(lr=0.01, epochs=20, seed=seed,
                                     beta=0.05, gamma=1.4, delta=0.54,
                                     eta=0.54, lambda_max=1.0)
        off_cfg = trainer.TrainConfig(lr=0.01, epochs=20, seed=seed,
                                      beta=0.05, gamma=1.4, delta=0.54,
                                      eta=0.0, lambda_max=1.0)
        _, h_on = trainer.train(on_cfg, source, target)
        _, h_off = trainer.train(off_cfg, source, target)
        bar = 0.9 * h_on[-1].target_accuracy
        per_seed.append([first_reach(h_on, bar), first_reach(h_off, bar)])

    nonstrict = sum(1 for on, off in per_seed if on <= off)
    strict = sum(1 for on, off in per_seed if on < off)
    computed = {"per_seed_epochs": per_seed, "nonstrict": nonstrict,
                "strict": strict}
    reference, first_run = _golden("convergence.json", computed)

    ok = (nonstrict == 5 and strict >= 3
          and per_seed == reference["per_seed_epochs"]
          and nonstrict == reference["nonstrict"]
          and strict == reference["strict"])
    _report(7, ok, f"per-seed (with, without) = {per_seed}, "
                   f"nonstrict {nonstrict}/5, strict {strict}/5"
                   + (" (reference written)" if first_run else ""))


def test_criterion_8_byte_identical_metrics(tmp_path):
    """Two runs of the same configuration produce byte-identical metrics
    and checkpoint files."""
    outputs = []
    for tag in ("a", "b"):
        out_dir = tmp_path / tag
        cfg_path = str(tmp_path / f"{tag}.json")
        with open(cfg_path, "w") as fh:
            json.dump({
                "schema_version": 1,
                "train": {"lr": 0.01, "epochs": 2, "seed": 0},
                "source": {"generator": "two_moons", "n": 40, "seed": 0},
                "target": {"generator": "two_moons", "n": 40, "seed": 1,
                           "rotation_degrees": 45.0},
                "output_dir": str(out_dir),
            }, fh)
        assert cli.main(["train", cfg_path, "--no-figures"]) == 0
        outputs.append(out_dir)

    a, b = outputs
    metrics_equal = (a / "metrics.jsonl").read_bytes() \
        == (b / "metrics.jsonl").read_bytes()
    checkpoint_equal = (a / "checkpoint.json").read_bytes() \
        == (b / "checkpoint.json").read_bytes()
    _report(8, metrics_equal and checkpoint_equal,
            f"metrics identical: {metrics_equal}, "
            f"checkpoint identical: {checkpoint_equal}")
