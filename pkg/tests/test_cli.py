import csv
import json
import os

import numpy as np
import pytest

from fmd.cli import main
from fmd.data import DatasetSpec, generate, split_indices
from fmd.image import load_ppm, quantize01, save_ppm
from fmd.nn import TrainConfig, save_weights_file, train
from fmd.scoring import read_scores


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("data")
    rc = main(["dataset", "gen", "--seed", "11", "--per-class", "4", "--out", str(path)])
    assert rc == 0
    return path


@pytest.fixture(scope="module")
def weights_path(tmp_path_factory, dataset_dir):
    """A quickly trained model over the tiny dataset."""
    path = tmp_path_factory.mktemp("model") / "weights.fmdw"
    ds = generate(DatasetSpec(seed=11, per_class=4))
    images = np.stack([quantize01(i) for i, _ in ds])
    labels = np.array([l for _, l in ds])
    params, _ = train(images, labels, TrainConfig(seed=1, epochs=2, batch_size=8))
    save_weights_file(path, params)
    return path


class TestDatasetGen:
    def test_writes_ppms_and_manifest(self, dataset_dir):
        names = sorted(os.listdir(dataset_dir))
        assert "manifest.csv" in names
        assert "cls0_0000.ppm" in names
        assert len([n for n in names if n.endswith(".ppm")]) == 40

    def test_deterministic(self, dataset_dir, tmp_path):
        rc = main(["dataset", "gen", "--seed", "11", "--per-class", "4", "--out", str(tmp_path)])
        assert rc == 0
        a = (dataset_dir / "cls3_0002.ppm").read_bytes()
        b = (tmp_path / "cls3_0002.ppm").read_bytes()
        assert a == b


class TestAttackCli:
    def test_writes_adversarial_images_and_log(self, dataset_dir, weights_path, tmp_path):
        out = tmp_path / "adv"
        rc = main([
            "attack", "--method", "fgsm", "--epsilon", "0.05",
            "--model", str(weights_path), "--in", str(dataset_dir), "--out", str(out),
        ])
        assert rc == 0
        with open(out / "log.csv", newline="") as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["filename", "label", "pred_clean", "pred_adv", "linf"]
        assert len(rows) == 41
        for row in rows[1:]:
            assert float(row[4]) <= 0.05 + 1e-7
        adv = load_ppm(out / rows[1][0])
        src = load_ppm(dataset_dir / rows[1][0])
        assert np.max(np.abs(adv - src)) <= 0.05 + 1e-7

    def test_bad_model_path_is_data_error(self, dataset_dir, tmp_path):
        rc = main([
            "attack", "--method", "fgsm", "--epsilon", "0.05",
            "--model", str(tmp_path / "nope.fmdw"), "--in", str(dataset_dir),
            "--out", str(tmp_path / "adv"),
        ])
        assert rc == 3

    def test_bad_epsilon_is_config_error(self, dataset_dir, weights_path, tmp_path):
        rc = main([
            "attack", "--method", "bim", "--epsilon", "2.0",
            "--model", str(weights_path), "--in", str(dataset_dir),
            "--out", str(tmp_path / "adv"),
        ])
        assert rc == 2


class TestDenoiseCli:
    @pytest.mark.parametrize("filt", ["median", "wiener-adaptive", "wiener-deconv"])
    def test_filters_write_images(self, dataset_dir, tmp_path, filt):
        out = tmp_path / filt
        rc = main(["denoise", "--filter", filt, "--in", str(dataset_dir), "--out", str(out)])
        assert rc == 0
        img = load_ppm(out / "cls0_0000.ppm")
        expected_channels = 3 if filt == "median" else 1
        assert img.shape[2] == expected_channels


class TestScoreAndDetectCli:
    def test_score_then_train_then_eval(self, dataset_dir, weights_path, tmp_path):
        scores_csv = tmp_path / "scores.csv"
        rc = main([
            "score", "--model", str(weights_path), "--in", str(dataset_dir),
            "--filter", "median", "--attack", "clean", "--adv-label", "0",
            "--out", str(scores_csv),
        ])
        assert rc == 0
        records = read_scores(scores_csv)
        assert len(records) == 40
        assert all(r.label == 0 for r in records)
        assert all(r.score >= 0 for r in records)

        # forge an adversarial-side CSV by shifting scores, then append
        rc = main([
            "score", "--model", str(weights_path), "--in", str(dataset_dir),
            "--filter", "median", "--attack", "fgsm", "--adv-label", "1",
            "--out", str(scores_csv), "--append",
        ])
        assert rc == 0
        records = read_scores(scores_csv)
        assert len(records) == 80

        model_json = tmp_path / "det.json"
        rc = main([
            "detect", "train", "--scores", str(scores_csv), "--classifier", "knn",
            "--seed", "3", "--out", str(model_json),
        ])
        assert rc == 0
        payload = json.loads(model_json.read_text())
        assert payload["kind"] == "knn"
        assert payload["hyperparameters"]["k"] in (1, 3, 5, 7, 9, 11, 13, 15)

        metrics_json = tmp_path / "metrics.json"
        rc = main([
            "detect", "eval", "--model", str(model_json), "--scores", str(scores_csv),
            "--out", str(metrics_json),
        ])
        assert rc == 0
        metrics = json.loads(metrics_json.read_text())
        assert set(metrics) == {"n", "accuracy", "confusion", "detection_rates"}
        assert metrics["n"] == 80
        assert sum(metrics["confusion"].values()) == 80


class TestExitCodes:
    def test_score_bad_norm_is_config_error(self, weights_path, dataset_dir, tmp_path):
        rc = main([
            "score", "--model", str(weights_path), "--in", str(dataset_dir),
            "--filter", "median", "--attack", "clean", "--adv-label", "0",
            "--k", "11", "--out", str(tmp_path / "s.csv"),
        ])
        assert rc == 2  # k out of range for 10 classes

    def test_detect_eval_missing_scores_is_data_error(self, tmp_path, weights_path):
        model_json = tmp_path / "m.json"
        model_json.write_text(json.dumps({
            "kind": "knn", "hyperparameters": {"k": 1}, "scores": [0.1], "labels": [0],
        }))
        rc = main(["detect", "eval", "--model", str(model_json),
                   "--scores", str(tmp_path / "missing.csv")])
        assert rc == 3
