import json
import math

import numpy as np
import pytest

from cotlab.datasets import Dataset
from cotlab.evaluation import evaluate, export_embeddings, load_embeddings, report_from_probs
from cotlab.models import MlpArchitecture, ModelState, init_model, zero_model
from cotlab.numerics import DimensionError, Rng, softmax


def test_perfect_predictor():
    probs = np.eye(3)[[0, 1, 2, 1]] * 0.98 + 0.01
    r = report_from_probs(probs, [0, 1, 2, 1])
    assert r.error_rate == 0.0
    assert r.confusion == [[1, 0, 0], [0, 2, 0], [0, 0, 1]]
    assert r.mean_true_confidence == pytest.approx(0.99)
    # two equal complement entries: entropy ln 2, normalized by K-1 = 2
    assert r.mean_normalized_complement_entropy == pytest.approx(math.log(2) / 2, abs=1e-12)


def test_uniform_k4():
    r = report_from_probs(np.full((5, 4), 0.25), [0, 1, 2, 3, 0])
    assert r.mean_true_confidence == pytest.approx(0.25, abs=1e-15)
    assert r.mean_normalized_complement_entropy == pytest.approx(math.log(3) / 3, abs=1e-12)
    assert r.mean_max_complement_prob == pytest.approx(0.25, abs=1e-15)
    # ties go to class 0
    assert r.error_rate == pytest.approx(3 / 5)


def test_three_sample_hand_computed():
    probs = np.array([[0.7, 0.2, 0.1], [0.1, 0.3, 0.6], [0.2, 0.5, 0.3]])
    labels = [0, 1, 1]
    r = report_from_probs(probs, labels)
    assert r.error_rate == pytest.approx(1 / 3)
    assert r.confusion == [[1, 0, 0], [0, 1, 1], [0, 0, 0]]
    assert r.mean_true_confidence == pytest.approx((0.7 + 0.3 + 0.5) / 3)
    assert r.mean_max_complement_prob == pytest.approx((0.2 + 0.6 + 0.3) / 3)

    def h(q):
        q = np.asarray(q) / sum(q)
        return -float(np.sum(q * np.log(q)))

    expected = (h([0.2, 0.1]) + h([0.1, 0.6]) + h([0.2, 0.3])) / 3 / 2
    assert r.mean_normalized_complement_entropy == pytest.approx(expected, abs=1e-12)


def test_error_rate_matches_confusion_trace():
    rng = np.random.default_rng(0)
    probs = softmax(rng.normal(size=(200, 5)))
    labels = rng.integers(0, 5, 200)
    r = report_from_probs(probs, labels)
    c = np.array(r.confusion)
    assert c.sum() == 200
    assert r.error_rate == 1 - np.trace(c) / 200
    assert r.error_rate == np.mean(np.argmax(probs, axis=1) != labels)


def test_evaluate_dimension_mismatch_and_empty():
    model = zero_model(MlpArchitecture(2, (), 3))
    with pytest.raises(DimensionError):
        evaluate(model, Dataset(np.zeros((2, 3)), [0, 1], 3))
    r = evaluate(model, Dataset(np.zeros((0, 2)), [], 3))
    assert r.num_samples == 0 and r.error_rate == 0.0


def test_report_json_and_csv(tmp_path):
    r = report_from_probs(np.full((2, 3), 1 / 3), [0, 2])
    r.write_json(tmp_path / "e.json", {"config_hash": "h", "seed": 1})
    payload = json.loads((tmp_path / "e.json").read_text())
    assert payload["config_hash"] == "h" and payload["num_samples"] == 2
    r.write_csv(tmp_path / "e.csv", "config_hash=h seed=1")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[:2] == ["# config_hash=h seed=1", "metric,value"]
    assert "confusion[2][0],1" in lines


def test_embeddings_three_rows(tmp_path):
    w = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    model = ModelState(MlpArchitecture(2, (), 3), [(w, np.array([0.0, 0.5, -0.25]))])
    ds = Dataset(np.array([[1.0, 2.0], [0.0, 0.0], [-1.0, 3.0]]), [2, 0, 1], 3)
    export_embeddings(model, ds, tmp_path / "emb.csv")
    lines = (tmp_path / "emb.csv").read_text().splitlines()
    assert lines[0] == "logit0,logit1,logit2,label"
    assert lines[1] == "1,2.5,2.75,2"
    assert len(lines) == 4


def test_embeddings_round_trip_softmax(tmp_path):
    model = init_model(MlpArchitecture(3, (5,), 4), Rng(0))
    ds = Dataset(np.random.default_rng(0).normal(size=(10, 3)), np.arange(10) % 4, 4)
    export_embeddings(model, ds, tmp_path / "emb.csv")
    logits, labels = load_embeddings(tmp_path / "emb.csv")
    assert np.array_equal(labels, ds.labels)
    ref = evaluate(model, ds)
    again = report_from_probs(softmax(logits), labels)
    assert abs(again.mean_true_confidence - ref.mean_true_confidence) < 1e-12
    assert abs(again.mean_normalized_complement_entropy - ref.mean_normalized_complement_entropy) < 1e-12


def test_embeddings_empty_dataset(tmp_path):
    model = zero_model(MlpArchitecture(2, (), 2))
    export_embeddings(model, Dataset(np.zeros((0, 2)), [], 2), tmp_path / "e.csv")
    assert (tmp_path / "e.csv").read_text() == "logit0,logit1,label\n"
    logits, labels = load_embeddings(tmp_path / "e.csv")
    assert logits.shape == (0, 2) and labels.size == 0


def test_embeddings_unwritable(tmp_path):
    model = zero_model(MlpArchitecture(2, (), 2))
    with pytest.raises(OSError, match="cannot write"):
        export_embeddings(model, Dataset(np.zeros((1, 2)), [0], 2), tmp_path / "missing" / "e.csv")
