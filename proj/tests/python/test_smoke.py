import math
import os
import subprocess

import numpy as np
import pytest

import hpmood


def two_class_bank(rng, n=30, d=5):
    centres = np.eye(2, d) * 4.0
    labels = np.repeat([0, 1], n)
    features = centres[labels] + rng.normal(size=(2 * n, d))
    return features, labels


def test_project_sphere():
    np.testing.assert_allclose(hpmood.project_sphere(np.array([3.0, 4.0])), [0.6, 0.8])
    with pytest.raises(ValueError, match="degenerate feature"):
        hpmood.project_sphere(np.zeros(2))


def test_classifier_scores():
    assert hpmood.energy(np.zeros(2)) == pytest.approx(-math.log(2))
    assert hpmood.energy(np.zeros(2), temperature=2.0) == pytest.approx(-2 * math.log(2))
    assert hpmood.msp(np.array([math.log(3), 0.0])) == pytest.approx(-0.75)
    with pytest.raises(ValueError):
        hpmood.energy(np.zeros(2), temperature=0.0)


def test_metrics():
    assert hpmood.auroc([1, 3], [2, 4]) == 0.75
    assert hpmood.fpr_at_tpr([0.0] * 20, list(range(1, 21))) == 0.0
    assert hpmood.les(100, 1) == 2.0
    assert abs(hpmood.les(78.35, 0.06517) - 3.08) <= 0.005
    with pytest.raises(ValueError, match="empty input"):
        hpmood.auroc([], [1.0])


def test_fit_and_score_hpm():
    rng = np.random.default_rng(0)
    features, labels = two_class_bank(rng)
    model = hpmood.MetricModel.fit(features, labels, 2, variant="hpm")
    assert model.variant == "hpm"
    assert model.anchors.shape == (2, 5)
    np.testing.assert_array_less(np.linalg.norm(model.anchors, axis=1), 1.0 + 1e-12)
    query = rng.normal(size=5)
    assert model.score(query) == pytest.approx(model.score(1000.0 * query), abs=1e-9)
    batch = model.score_batch(features[:7])
    np.testing.assert_array_equal(batch, [model.score(row) for row in features[:7]])

    raw = hpmood.MetricModel.fit(features, labels, 2, variant="md")
    assert raw.score(2 * query) != pytest.approx(raw.score(query))

    with pytest.raises(ValueError, match="insufficient class support"):
        hpmood.MetricModel.fit(features[:31], labels[:31], 2, variant="hc-md")
    with pytest.raises(ValueError, match="unknown variant"):
        hpmood.MetricModel.fit(features, labels, 2, variant="knn")


def test_model_and_bank_persistence(tmp_path):
    rng = np.random.default_rng(1)
    features, labels = two_class_bank(rng)
    hpmood.save_bank(str(tmp_path / "bank"), features, labels, 2, logits=rng.normal(size=(60, 2)))
    bank = hpmood.load_bank(str(tmp_path / "bank"))
    np.testing.assert_array_equal(bank["features"], features.astype(np.float32).astype(np.float64))
    assert list(bank["labels"]) == list(labels)
    assert bank["logits"].shape == (60, 2)
    assert hpmood.class_counts(labels, 2) == [30, 30]

    model = hpmood.MetricModel.fit(features, labels, 2, variant="rp-md", lambda_rel=0.01)
    model.save(str(tmp_path / "model"))
    back = hpmood.MetricModel.load(str(tmp_path / "model"))
    np.testing.assert_array_equal(back.anchors, model.anchors)
    assert back.score(features[0]) == model.score(features[0])

    with pytest.raises(OSError):
        hpmood.load_bank(str(tmp_path / "missing"))


def test_geometry_helpers():
    cov = hpmood.class_covariance(np.array([[0.0, 1.0], [0.0, -1.0]]), [0, 0], 1, 0)
    np.testing.assert_array_equal(cov, [[0, 0], [0, 2]])
    spec = hpmood.spectrum(np.diag([2.0, 1.0, 1.0]))
    assert spec["effective_rank"] == pytest.approx(2 ** 1.5)
    row, null, rank = hpmood.projectors(np.array([[1.0, 1.0]]))
    np.testing.assert_allclose(row, 0.5 * np.ones((2, 2)))
    np.testing.assert_allclose(row + null, np.eye(2))
    assert rank == 1
    rng = np.random.default_rng(2)
    features, labels = two_class_bank(rng)
    pooled = hpmood.pooled_covariance(features, labels, 2)
    np.testing.assert_allclose(pooled, pooled.T)


def test_run_cli_in_process(tmp_path):
    out = str(tmp_path / "run")
    code, stdout, _ = hpmood.run_cli(["synth", "--out", out, "--classes", "4", "--dim", "6", "--n-max", "30"])
    assert code == 0
    assert "synth" in stdout
    code, _, _ = hpmood.run_cli(["report", "--out", out, "--cost", "1"])
    assert code == 0
    assert (tmp_path / "run" / "report.csv").read_text().startswith("# orientation=larger-is-ood")
    code, _, err = hpmood.run_cli(["fit", "--out", str(tmp_path / "nothing")])
    assert code == 2
    assert "error" in err


def test_cli_binary(tmp_path):
    exe = os.environ.get("HPMOOD_CLI")
    if not exe:
        pytest.skip("HPMOOD_CLI not set")
    out = str(tmp_path / "b")
    assert subprocess.run([exe, "synth", "--out", out, "--classes", "3"], capture_output=True).returncode == 0
    bad = subprocess.run([exe, "fit", "--out", out, "--detectors", "nope"], capture_output=True, text=True)
    assert bad.returncode == 1
    assert "unknown detector" in bad.stderr
