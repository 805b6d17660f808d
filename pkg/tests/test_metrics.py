import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from fmanet.errors import ProtocolError
from fmanet.eval import (FoldPredictions, aggregate_loso, compute_metrics, confusion, read_metrics_csv,
                         write_metrics_csv, write_summary)


def test_confusion_examples():
    labels = [0, 1, 2, 2, 1]
    np.testing.assert_array_equal(confusion(labels, labels), np.diag([1, 2, 2]))
    cm = confusion([1] * 5, labels, 3)
    assert (cm[:, 1] == [1, 2, 2]).all() and cm[:, [0, 2]].sum() == 0
    with pytest.raises(ValueError):
        confusion([0, 1], [0])
    with pytest.raises(ValueError):
        confusion([0, 3], [0, 1], 3)


def test_confusion_tally_oracle():
    rng = np.random.default_rng(0)
    for _ in range(50):
        c = int(rng.integers(2, 7))
        n = int(rng.integers(1, 60))
        p, t = rng.integers(0, c, n), rng.integers(0, c, n)
        np.testing.assert_array_equal(confusion(p, t, c), oracles.confusion_tally(p, t, c))


def test_hand_computed_two_class():
    r = compute_metrics([[8, 2], [4, 6]])
    assert r.accuracy == pytest.approx(0.7)
    assert r.uar == pytest.approx(0.7)
    np.testing.assert_allclose(r.precision, [8 / 12, 6 / 8])
    np.testing.assert_allclose(r.f1, [0.7272727, 0.6666667], atol=1e-6)
    assert r.uf1 == pytest.approx(0.697, abs=1e-3)


def test_perfect_matrix():
    r = compute_metrics(np.diag([3, 4, 5]))
    assert r.accuracy == r.uf1 == r.uar == 1.0 and not r.flagged


def test_random_matrices_match_tally_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        c = int(rng.integers(2, 8))
        cm = rng.integers(0, 12, (c, c))
        if rng.uniform() < 0.3:
            k = rng.integers(c)
            cm[k, :] = 0
            cm[:, k] = 0
        if cm.sum() == 0:
            cm[0, 0] = 1
        r = compute_metrics(cm)
        acc, uf1, uar, precisions, recalls, f1s = oracles.metrics_tally(cm.tolist())
        assert (r.accuracy, r.uf1, r.uar) == pytest.approx((acc, uf1, uar), abs=1e-12)
        np.testing.assert_allclose(r.precision, precisions, atol=1e-12)
        np.testing.assert_allclose(r.recall, recalls, atol=1e-12)
        np.testing.assert_allclose(r.f1, f1s, atol=1e-12)
        assert r.accuracy == np.trace(cm) / cm.sum()


def test_zero_denominator_policy():
    r = compute_metrics([[5, 0, 0], [2, 3, 0], [0, 0, 0]])
    assert r.flagged == [2]
    assert r.f1[2] == 0 and r.recall[2] == 0 and r.precision[2] == 0
    with pytest.raises(ValueError):
        compute_metrics(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        compute_metrics(np.zeros((2, 3)))


def test_balanced_random_predictions_near_chance():
    rng = np.random.default_rng(2)
    c, n = 5, 4000
    r = compute_metrics(confusion(rng.integers(0, c, n), rng.integers(0, c, n), c))
    sigma = np.sqrt((1 / c) * (1 - 1 / c) / n)
    assert abs(r.accuracy - 1 / c) <= 3 * sigma


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_class_permutation_and_rescaling(seed):
    rng = np.random.default_rng(seed)
    c = int(rng.integers(2, 6))
    cm = rng.integers(1, 10, (c, c))
    r = compute_metrics(cm)
    perm = rng.permutation(c)
    rp = compute_metrics(cm[np.ix_(perm, perm)])
    np.testing.assert_allclose(rp.f1, r.f1[perm])
    np.testing.assert_allclose(rp.recall, r.recall[perm])
    assert rp.accuracy == pytest.approx(r.accuracy) and rp.uf1 == pytest.approx(r.uf1)
    # duplicating every sample of one class k times keeps per-class recall
    k = int(rng.integers(c))
    scaled = cm.copy()
    scaled[k] *= int(rng.integers(2, 5))
    assert compute_metrics(scaled).uar == pytest.approx(r.uar)
    for value in (r.accuracy, r.uf1, r.uar):
        assert 0 <= value <= 1


def folds_from(rng, subjects=4, c=3):
    out = []
    for j in range(subjects):
        n = int(rng.integers(1, 12))
        out.append(FoldPredictions(f"s{j}", [f"s{j}/{i}" for i in range(n)],
                                   rng.integers(0, c, n), rng.integers(0, c, n)))
    return out


def test_aggregate_single_and_concatenation():
    rng = np.random.default_rng(3)
    f = folds_from(rng, 1)
    assert aggregate_loso(f, 3).pooled.as_dict() == compute_metrics(confusion(f[0].preds, f[0].labels, 3)).as_dict()
    folds = folds_from(rng, 5)
    pooled = aggregate_loso(folds, 3).pooled
    cat = compute_metrics(confusion(np.concatenate([x.preds for x in folds]),
                                    np.concatenate([x.labels for x in folds]), 3))
    assert pooled.as_dict() == cat.as_dict()
    shuffled = aggregate_loso(folds[::-1], 3)
    assert shuffled.pooled.as_dict() == pooled.as_dict()
    assert list(shuffled.folds) == sorted(x.subject for x in folds)


def test_aggregate_rejects_overlap():
    rng = np.random.default_rng(4)
    folds = folds_from(rng, 2)
    folds[1].sample_ids[0] = folds[0].sample_ids[0]
    with pytest.raises(ProtocolError):
        aggregate_loso(folds, 3)
    dup = folds_from(rng, 2)
    dup[1].subject = dup[0].subject
    with pytest.raises(ProtocolError):
        aggregate_loso(dup, 3)


def test_csv_and_summary(tmp_path):
    import json
    report = aggregate_loso(folds_from(np.random.default_rng(5), 3), 3)
    write_metrics_csv(report, tmp_path / "m.csv")
    rows = read_metrics_csv(tmp_path / "m.csv")
    assert [r["fold_subject"] for r in rows] == ["s0", "s1", "s2", "ALL"]
    assert float(rows[-1]["acc"]) == pytest.approx(report.pooled.accuracy, abs=1e-6)
    write_summary(report, tmp_path / "s.json", ["a", "b", "c"])
    data = json.loads((tmp_path / "s.json").read_text())
    assert data["class_names"] == ["a", "b", "c"] and set(data["macro"]) == {"accuracy", "uf1", "uar"}
