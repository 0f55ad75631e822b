import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import roc_auc_score

from cvad.errors import DataError, UndefinedMetricError
from cvad.dataset import build_cvad
from cvad.evaluation import LabeledFrames, evaluate_classes, evaluate_cvad, micro_auroc, pool_scores
import oracles


@pytest.mark.parametrize(
    "scores,labels,expected",
    [
        ([0, 0, 1, 1], [0, 0, 1, 1], 1.0),
        ([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1], 0.75),
        ([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1], 0.5),
        ([1, 1, 0, 0], [0, 0, 1, 1], 0.0),
    ],
)
def test_auroc_examples(scores, labels, expected):
    assert micro_auroc(scores=scores, labels=labels) == pytest.approx(expected, abs=1e-12)


def test_auroc_single_class_is_undefined():
    with pytest.raises(UndefinedMetricError):
        micro_auroc(scores=[0.1, 0.2], labels=[1, 1])
    with pytest.raises(UndefinedMetricError):
        micro_auroc(scores=[0.1, 0.2], labels=[0, 0])


def test_labeled_frames_validation():
    with pytest.raises(DataError):
        LabeledFrames([0.1, 0.2], [1])
    with pytest.raises(DataError):
        LabeledFrames([0.1, 0.2], [1, 2])


def test_auroc_matches_oracles_with_ties():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(2, 400))
        scores = rng.integers(0, 6, n) / 5.0
        labels = rng.integers(0, 2, n)
        labels[0], labels[1] = 0, 1
        got = micro_auroc(scores=scores, labels=labels)
        assert abs(got - oracles.auc_all_pairs(scores, labels)) <= 1e-9
        assert abs(got - roc_auc_score(labels, scores)) <= 1e-9


@settings(max_examples=100, deadline=None)
@given(data=st.lists(st.tuples(st.integers(0, 1000).map(lambda k: k / 1000), st.integers(0, 1)), min_size=2, max_size=60))
def test_auroc_invariances(data):
    scores = np.array([s for s, _ in data])
    labels = np.array([y for _, y in data])
    if labels.min() == labels.max():
        return
    auc = micro_auroc(scores=scores, labels=labels)
    assert micro_auroc(scores=np.exp(3 * scores) + 2, labels=labels) == pytest.approx(auc, abs=1e-12)
    assert micro_auroc(scores=scores, labels=1 - labels) == pytest.approx(1 - auc, abs=1e-12)


def test_pooled_not_per_video_average():
    s = {"a": np.array([0.1, 0.2]), "b": np.array([0.8, 0.9])}
    y = {"a": np.array([0, 1]), "b": np.array([0, 1])}
    pooled = pool_scores(s, y, ["a", "b"], "c")
    assert pooled.provenance[0] == ("a", "c")
    assert micro_auroc(pooled) == pytest.approx(oracles.auc_all_pairs(pooled.scores, pooled.labels))
    # each video alone separates perfectly; pooled frames do not
    assert micro_auroc(pooled) == pytest.approx(0.75)


def test_pool_errors():
    with pytest.raises(DataError):
        pool_scores({}, {"a": np.zeros(2)}, ["a"])
    with pytest.raises(DataError):
        pool_scores({"a": np.zeros(3)}, {"a": np.zeros(2)}, ["a"])


def _two_class():
    return {
        "fighting": LabeledFrames([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]),
        "car": LabeledFrames([0.5, 0.5, 0.5, 0.5], [0, 1, 0, 1]),
    }


def test_two_class_report():
    rep = evaluate_classes(_two_class(), {"fighting": "action", "car": "appearance"})
    assert rep.overall == pytest.approx(0.75)
    assert rep.category_avg == {"action": 1.0, "appearance": 0.5}
    d = json.loads(rep.to_json())
    assert [c["name"] for c in d["classes"]] == ["fighting", "car"]
    assert set(d["classes"][0]) == {"name", "category", "auroc", "n_pos", "n_neg"}
    table = rep.format_table()
    assert "Overall Average" in table and "75.00" in table


def test_report_order_independent():
    parts = _two_class()
    cats = {"fighting": "action", "car": "appearance"}
    a = evaluate_classes(parts, cats)
    b = evaluate_classes(dict(reversed(list(parts.items()))), cats)
    assert a.to_dict() == b.to_dict()


def test_single_class_report():
    rep = evaluate_classes({"car": _two_class()["car"]}, {"car": "appearance"})
    assert list(rep.category_avg) == ["appearance"]
    assert rep.overall == 0.5


def test_evaluate_cvad_end_to_end():
    counts = {"v1": 4, "v2": 4}
    ann = {"v1": [{"class": "run", "start_frame": 2, "end_frame": 3}]}
    manifest = build_cvad(counts, ann, {"run": "action"})
    scores = {"run": {"v1": np.array([0.1, 0.2, 0.9, 0.8]), "v2": np.array([0.3, 0.1, 0.2, 0.4])}}
    rep = evaluate_cvad(scores, manifest)
    assert rep.overall == pytest.approx(1.0)
    assert rep.classes[0].n_pos == 2 and rep.classes[0].n_neg == 6
    with pytest.raises(DataError, match="no scores for classes"):
        evaluate_cvad({}, manifest)
