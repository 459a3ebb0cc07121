import numpy as np
import pytest

from app.evaluation.metrics import compute_metrics


def _brute_force(gold, pred):
    cm = [[0] * 3 for _ in range(3)]
    for g, p in zip(gold, pred):
        cm[g][p] += 1
    precision, recall, f1 = [], [], []
    for c in range(3):
        tp = cm[c][c]
        col = sum(cm[r][c] for r in range(3))
        row = sum(cm[c])
        p = tp / col if col else 0.0
        r = tp / row if row else 0.0
        precision.append(p)
        recall.append(r)
        f1.append(2 * p * r / (p + r) if p + r else 0.0)
    return cm, sum(precision) / 3, sum(recall) / 3, sum(f1) / 3, sum(cm[c][c] for c in range(3)) / len(gold)


def test_random_label_vectors_match_brute_force():
    rng = np.random.default_rng(0)
    for trial in range(1200):
        n = int(rng.integers(1, 201))
        # Every fourth case draws from two labels only, so some classes are never predicted.
        high = 2 if trial % 4 == 0 else 3
        gold = rng.integers(0, 3, size=n).tolist()
        pred = rng.integers(0, high, size=n).tolist()
        cm, p, r, f1, acc = _brute_force(gold, pred)
        m = compute_metrics(gold, pred)
        assert m.confusion == cm
        assert m.precision == pytest.approx(p, abs=1e-12, rel=0)
        assert m.recall == pytest.approx(r, abs=1e-12, rel=0)
        assert m.f1 == pytest.approx(f1, abs=1e-12, rel=0)
        assert m.accuracy == pytest.approx(acc, abs=1e-12, rel=0)
        assert m.per_class_true == [cm[c][c] for c in range(3)]


def test_always_first_class_on_balanced_set():
    gold = [0, 1, 2] * 5
    m = compute_metrics(gold, [0] * 15)
    assert m.accuracy == pytest.approx(1 / 3)
    assert m.precision == pytest.approx(1 / 9)
    assert m.recall == pytest.approx(1 / 3)
    assert m.per_class_true == [5, 0, 0]


def test_perfect_predictions():
    m = compute_metrics([0, 1, 2, 2], [0, 1, 2, 2])
    assert (m.precision, m.recall, m.f1, m.accuracy) == (1.0, 1.0, 1.0, 1.0)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        compute_metrics([], [])
    with pytest.raises(ValueError):
        compute_metrics([0, 1], [0])
