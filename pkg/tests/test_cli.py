"""End-to-end tests of the command-line interface, run in process."""

import json
import math
import os
import re
from types import SimpleNamespace

import numpy as np
import pytest

from dalign import autodiff as ad
from dalign import checks, cli, data, kernels, models
from dalign.autodiff import Tensor


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return str(path)


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) if isinstance(v, float)
                              else str(v) for v in row) + "\n")
    return str(path)


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """One full training run shared by the eval/embed tests, plus the
    source data re-exported as delimited files."""
    root = tmp_path_factory.mktemp("trained")
    out_dir = root / "out"
    cfg_path = _write_json(root / "run.json", {
        "schema_version": 1,
        "train": {"lr": 0.01, "epochs": 20, "seed": 0},
        "source": {"generator": "two_moons", "n": 200, "seed": 0},
        "target": {"generator": "two_moons", "n": 200, "seed": 1,
                   "rotation_degrees": 45.0},
        "output_dir": str(out_dir),
    })
    rc = cli.main(["train", cfg_path])
    assert rc == 0

    src = data.gen_two_moons(
        data.SyntheticSpec(generator="two_moons", n=200, seed=0))
    src_csv = root / "source.csv"
    data.save_table(src, str(src_csv))
    unlabeled_csv = root / "unlabeled.csv"
    data.save_table(src.without_labels(), str(unlabeled_csv))
    return SimpleNamespace(
        root=root,
        out_dir=out_dir,
        config=cfg_path,
        checkpoint=str(out_dir / "checkpoint.json"),
        source_csv=str(src_csv),
        unlabeled_csv=str(unlabeled_csv),
        epochs=20,
        n=200,
    )


class TestTrain:
    def test_outputs_exist(self, trained):
        for name in ("manifest.json", "metrics.jsonl", "checkpoint.json",
                     "curves.png"):
            assert (trained.out_dir / name).exists(), name

    def test_metrics_has_one_record_per_epoch(self, trained):
        lines = open(trained.out_dir / "metrics.jsonl").read().splitlines()
        assert len(lines) == trained.epochs
        for i, line in enumerate(lines):
            doc = json.loads(line)
            assert doc["epoch"] == i
            assert set(doc) == set(cli.METRICS_FIELDS)

    def test_stdout_reports_accuracies(self, tmp_path, capsys):
        cfg = _write_json(tmp_path / "r.json", {
            "schema_version": 1,
            "train": {"lr": 0.01, "epochs": 2, "seed": 0},
            "source": {"generator": "two_moons", "n": 40, "seed": 0},
            "target": {"generator": "two_moons", "n": 40, "seed": 1},
            "output_dir": str(tmp_path / "out"),
        })
        assert cli.main(["train", cfg, "--no-figures"]) == 0
        out = capsys.readouterr().out
        assert re.search(r"trained 2 epochs; source_accuracy=\d\.\d{4} "
                         r"target_accuracy=\d\.\d{4}", out)
        assert f"outputs in {tmp_path / 'out'}" in out
        assert not (tmp_path / "out" / "curves.png").exists()

    def test_reruns_are_byte_identical(self, tmp_path):
        def run(tag):
            out = tmp_path / tag
            cfg = _write_json(tmp_path / f"{tag}.json", {
                "schema_version": 1,
                "train": {"lr": 0.01, "epochs": 2, "seed": 3},
                "source": {"generator": "two_moons", "n": 40, "seed": 0},
                "target": {"generator": "two_moons", "n": 40, "seed": 1,
                           "rotation_degrees": 30.0},
                "output_dir": str(out),
            })
            assert cli.main(["train", cfg, "--no-figures"]) == 0
            return out

        a, b = run("a"), run("b")
        for name in ("metrics.jsonl", "checkpoint.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_missing_config_exits_two(self, tmp_path, capsys):
        missing = str(tmp_path / "absent.json")
        assert cli.main(["train", missing]) == 2
        assert missing in capsys.readouterr().err

    def test_numeric_blowup_exits_three(self, tmp_path, capsys):
        rows = [[1.0, 2.0, 0], [1e160, -1.0, 1], [0.5, 0.25, 0],
                [2.0, 1.5, 1]]
        src_csv = _write_csv(tmp_path / "src.csv", ["x0", "x1", "label"],
                             [[float(a), float(b), c] for a, b, c in rows])
        cfg = _write_json(tmp_path / "r.json", {
            "schema_version": 1,
            "train": {"lr": 0.01, "epochs": 1, "seed": 0, "batch_size": 4},
            "source": {"file": src_csv},
            "target": {"generator": "two_moons", "n": 4, "seed": 1},
            "output_dir": str(tmp_path / "out"),
        })
        with np.errstate(all="ignore"):
            assert cli.main(["train", cfg, "--no-figures"]) == 3
        assert "aborted at epoch 0" in capsys.readouterr().err


class TestEval:
    def test_accuracy_on_own_source(self, trained, capsys):
        assert cli.main(["eval", trained.checkpoint,
                         trained.source_csv]) == 0
        out = capsys.readouterr().out.strip().splitlines()[-1]
        assert re.fullmatch(r"\d\.\d{4}", out)
        assert float(out) >= 0.95

    def test_unlabeled_dataset_exits_four(self, trained, capsys):
        assert cli.main(["eval", trained.checkpoint,
                         trained.unlabeled_csv]) == 4
        assert "label" in capsys.readouterr().err

    def test_dimension_mismatch_exits_four(self, trained, tmp_path):
        wide = _write_csv(tmp_path / "wide.csv",
                          ["x0", "x1", "x2", "label"],
                          [[0.1, 0.2, 0.3, 0], [0.4, 0.5, 0.6, 1]])
        assert cli.main(["eval", trained.checkpoint, wide]) == 4

    def test_missing_checkpoint_exits_two(self, trained, tmp_path):
        assert cli.main(["eval", str(tmp_path / "no.json"),
                         trained.source_csv]) == 2


def _losses_fixture(tmp_path, x_s, y_s, x_t, logits_t):
    d = x_s.shape[1]
    k = logits_t.shape[1]
    fs = _write_csv(tmp_path / "fs.csv", [f"x{i}" for i in range(d)],
                    [[float(v) for v in row] for row in x_s])
    ls = _write_csv(tmp_path / "ls.csv", ["label"],
                    [[int(v)] for v in y_s])
    ft = _write_csv(tmp_path / "ft.csv", [f"x{i}" for i in range(d)],
                    [[float(v) for v in row] for row in x_t])
    lt = _write_csv(tmp_path / "lt.csv", [f"x{i}" for i in range(k)],
                    [[float(v) for v in row] for row in logits_t])
    return fs, ls, ft, lt


def _parse_losses(out):
    values = {}
    for line in out.strip().splitlines():
        name, _, value = line.partition(" = ")
        values[name] = float(value)
    return values


class TestLosses:
    def test_identical_domains_have_zero_mmd(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(8, 3))
        logits = rng.normal(size=(8, 2))
        labels = rng.integers(0, 2, size=8)
        fs, ls, ft, lt = _losses_fixture(tmp_path, x, labels, x, logits)
        assert cli.main(["losses", fs, ls, ft, lt]) == 0
        values = _parse_losses(capsys.readouterr().out)
        assert abs(values["L_MMD"]) < 1e-12

    def test_uniform_logits_spot_values(self, tmp_path, capsys):
        rng = np.random.default_rng(1)
        x_s = rng.normal(size=(6, 2))
        x_t = rng.normal(size=(6, 2)) + 1.0
        logits = np.zeros((6, 2))
        labels = np.array([0, 1, 0, 1, 0, 1])
        fs, ls, ft, lt = _losses_fixture(tmp_path, x_s, labels, x_t, logits)
        assert cli.main(["losses", fs, ls, ft, lt]) == 0
        values = _parse_losses(capsys.readouterr().out)
        assert values["L_MCC"] == pytest.approx(0.5, abs=1e-12)
        assert values["L_IM"] == pytest.approx(0.0, abs=1e-12)

    def test_oracle_deviation_is_tiny(self, tmp_path, capsys):
        rng = np.random.default_rng(2)
        x_s = rng.normal(size=(9, 3))
        x_t = rng.normal(size=(7, 3)) + 0.5
        logits = rng.normal(size=(7, 3))
        labels = rng.integers(0, 3, size=9)
        fs, ls, ft, lt = _losses_fixture(tmp_path, x_s, labels, x_t, logits)
        assert cli.main(["losses", fs, ls, ft, lt, "--oracle"]) == 0
        values = _parse_losses(capsys.readouterr().out)
        assert values["oracle_max_abs_deviation"] < 1e-9

    def test_printed_values_round_trip_exactly(self, tmp_path, capsys):
        """repr output carries full float precision: parsing it back gives
        bit-for-bit the library's own value."""
        rng = np.random.default_rng(3)
        x_s = rng.normal(size=(8, 2))
        x_t = rng.normal(size=(6, 2)) + 0.3
        logits = rng.normal(size=(6, 2))
        labels = rng.integers(0, 2, size=8)
        fs, ls, ft, lt = _losses_fixture(tmp_path, x_s, labels, x_t, logits)
        assert cli.main(["losses", fs, ls, ft, lt]) == 0
        values = _parse_losses(capsys.readouterr().out)

        kcfg = kernels.bandwidth_family(kernels.median_heuristic(x_s, x_t))
        mmd = kernels.mmd2_biased(Tensor(x_s), Tensor(x_t), kcfg).item()
        assert values["L_MMD"] == mmd

    def test_disc_columns(self, tmp_path, capsys):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(4, 2))
        logits = rng.normal(size=(4, 2))
        labels = np.array([0, 1, 0, 1])
        fs, ls, ft, lt = _losses_fixture(tmp_path, x, labels, x, logits)
        ds = _write_csv(tmp_path / "ds.csv", ["x0"], [[0.5]] * 4)
        dt = _write_csv(tmp_path / "dt.csv", ["x0"], [[0.5]] * 4)
        assert cli.main(["losses", fs, ls, ft, lt,
                         "--disc-source", ds, "--disc-target", dt]) == 0
        values = _parse_losses(capsys.readouterr().out)
        assert values["L_dis"] == pytest.approx(2.0 * math.log(2.0),
                                                abs=1e-12)

    def test_disc_flags_must_pair(self, tmp_path, capsys):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(4, 2))
        labels = np.array([0, 1, 0, 1])
        fs, ls, ft, lt = _losses_fixture(tmp_path, x, labels, x,
                                         rng.normal(size=(4, 2)))
        ds = _write_csv(tmp_path / "ds.csv", ["x0"], [[0.5]] * 4)
        assert cli.main(["losses", fs, ls, ft, lt,
                         "--disc-source", ds]) == 2
        assert "together" in capsys.readouterr().err

    def test_row_mismatch_exits_four(self, tmp_path):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(4, 2))
        fs, ls, ft, lt = _losses_fixture(tmp_path, x, np.array([0, 1, 0, 1]),
                                         x, rng.normal(size=(4, 2)))
        short = _write_csv(tmp_path / "short.csv", ["label"], [[0], [1]])
        assert cli.main(["losses", fs, short, ft, lt]) == 4

    def test_label_out_of_logit_range_exits_two(self, tmp_path, capsys):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(4, 2))
        labels = np.array([0, 1, 2, 1])
        fs, ls, ft, lt = _losses_fixture(tmp_path, x, labels, x,
                                         rng.normal(size=(4, 2)))
        assert cli.main(["losses", fs, ls, ft, lt]) == 2
        assert "out of range" in capsys.readouterr().err


class TestGradcheck:
    def test_two_seed_run_reports_all_losses_ok(self, capsys):
        assert cli.main(["gradcheck", "--seeds", "2"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 6
        for line, name in zip(lines, checks.LOSS_NAMES):
            assert line.startswith(name)
            assert line.endswith("ok")
            assert re.search(r"max_rel_err=\d\.\d{3}e[+-]\d\d seed=\d", line)

    def test_corrupted_backward_is_caught(self, monkeypatch, capsys):
        """A backward rule scaled by 3 must trip the verifier with exit
        code 5 and the failing losses on stderr."""
        def broken_relu(a):
            out = np.maximum(a.values, 0.0)
            mask = (a.values > 0.0).astype(np.float64)
            return ad._make("relu", out, (a,), lambda g: (3.0 * g * mask,))

        monkeypatch.setattr(ad, "relu", broken_relu)
        assert cli.main(["gradcheck", "--seeds", "1"]) == 5
        captured = capsys.readouterr()
        assert "gradcheck failed" in captured.err
        assert "clc" in captured.err
        assert "FAIL" in captured.out


class TestGenData:
    def test_round_trip_matches_direct_generator(self, tmp_path, capsys):
        spec_path = _write_json(tmp_path / "spec.json", {
            "generator": "two_moons", "n": 17, "seed": 5, "noise": 0.2})
        out_csv = str(tmp_path / "moons.csv")
        assert cli.main(["gen-data", spec_path, out_csv]) == 0
        assert f"wrote 17 rows to {out_csv}" in capsys.readouterr().out
        back = data.load_table(out_csv, data.default_schema(out_csv))
        direct = data.gen_two_moons(data.SyntheticSpec(
            generator="two_moons", n=17, seed=5, noise=0.2))
        assert np.array_equal(back.features, direct.features)
        assert np.array_equal(back.labels, direct.labels)

    def test_different_seeds_differ(self, tmp_path):
        outs = []
        for seed in (1, 2):
            spec_path = _write_json(tmp_path / f"s{seed}.json", {
                "generator": "two_moons", "n": 10, "seed": seed})
            out_csv = str(tmp_path / f"m{seed}.csv")
            assert cli.main(["gen-data", spec_path, out_csv]) == 0
            outs.append(data.load_table(out_csv,
                                        data.default_schema(out_csv)))
        assert not np.array_equal(outs[0].features, outs[1].features)

    def test_blobs_spec(self, tmp_path):
        spec_path = _write_json(tmp_path / "blobs.json", {
            "generator": "gaussian_blobs", "n": 8, "seed": 1,
            "noise": 0.3, "centers": [[0.0, 0.0], [5.0, 5.0]],
            "domain_tag": "target"})
        out_csv = str(tmp_path / "blobs.csv")
        assert cli.main(["gen-data", spec_path, out_csv]) == 0
        ds = data.load_table(out_csv, data.default_schema(out_csv))
        assert ds.n == 8
        assert ds.class_count == 2

    def test_unknown_field_exits_two(self, tmp_path, capsys):
        spec_path = _write_json(tmp_path / "bad.json", {
            "generator": "two_moons", "n": 5, "seed": 0, "spin": 3})
        assert cli.main(["gen-data", spec_path,
                         str(tmp_path / "o.csv")]) == 2
        assert "spin" in capsys.readouterr().err


class TestEmbed:
    def test_embedding_file_structure(self, trained, tmp_path, capsys):
        out_csv = str(tmp_path / "emb.csv")
        assert cli.main(["embed", trained.checkpoint, trained.source_csv,
                         out_csv]) == 0
        assert f"wrote {trained.n} embedded rows" in capsys.readouterr().out
        lines = open(out_csv).read().splitlines()
        assert lines[0] == "x,y,label"
        assert len(lines) == trained.n + 1
        assert os.path.exists(str(tmp_path / "emb.png"))

    def test_coordinates_are_centered_with_bounded_variance(self, trained,
                                                            tmp_path):
        out_csv = str(tmp_path / "emb.csv")
        assert cli.main(["embed", trained.checkpoint, trained.source_csv,
                         out_csv, "--no-figures"]) == 0
        rows = np.loadtxt(out_csv, delimiter=",", skiprows=1)
        coords = rows[:, :2]
        np.testing.assert_allclose(coords.mean(axis=0), 0.0, atol=1e-9)

        triple = models.load_checkpoint(trained.checkpoint)
        ds = data.load_table(trained.source_csv,
                             data.default_schema(trained.source_csv))
        feats = triple.feature(Tensor(ds.features)).values
        assert coords.var(axis=0).sum() <= feats.var(axis=0).sum() + 1e-9

    def test_no_figures_skips_png(self, trained, tmp_path):
        out_csv = str(tmp_path / "plain.csv")
        assert cli.main(["embed", trained.checkpoint, trained.source_csv,
                         out_csv, "--no-figures"]) == 0
        assert not os.path.exists(str(tmp_path / "plain.png"))

    def test_too_few_rows_exits_two(self, trained, tmp_path, capsys):
        tiny = data.DomainDataset(np.array([[0.0, 1.0], [1.0, 0.0]]),
                                  np.array([0, 1]), "target", 2)
        tiny_csv = str(tmp_path / "tiny.csv")
        data.save_table(tiny, tiny_csv)
        assert cli.main(["embed", trained.checkpoint, tiny_csv,
                         str(tmp_path / "o.csv")]) == 2
        assert "at least 3 rows" in capsys.readouterr().err
