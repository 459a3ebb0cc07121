import numpy as np
import pytest

from app.model import trainer as trainer_module
from app.model.trainer import Adam, EarlyStopping, TrainingDivergedError, build_model, precompute_facts, train
from app.state import LabeledDataset, ModelConfig, TrainConfig

SMALL = ModelConfig(d_e=8, d_h=8, max_len_pair=16, max_len_fact=16)


def test_early_stopping_on_val_loss_sequence():
    stopper = EarlyStopping(patience=5)
    seq = [1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99, 0.5]
    epochs = 0
    for value in seq:
        epochs += 1
        stopper.update(value)
        if stopper.should_stop:
            break
    assert epochs == 7
    assert stopper.best_epoch == 2
    assert stopper.best == pytest.approx(0.9)


def test_patience_zero_stops_at_first_non_improving_epoch():
    stopper = EarlyStopping(patience=0)
    assert stopper.update(1.0)
    assert not stopper.should_stop
    assert stopper.update(0.5)
    assert not stopper.update(0.5)
    assert stopper.should_stop
    assert stopper.best_epoch == 2


def test_adam_minimizes_quadratic():
    w = np.asarray([1.0])
    params = {"w": w}
    opt = Adam(params, lr=0.1)
    opt.step(params, {"w": 2 * w})
    assert w[0] == pytest.approx(0.9, abs=1e-6)
    for _ in range(500):
        opt.step(params, {"w": 2 * w})
    assert abs(w[0]) < 0.1


def _fit(variant, dataset, kg, stopwords, **cfg):
    facts = precompute_facts(dataset, kg, stopwords) if variant == "proposed" else None
    model = build_model(variant, dataset, facts, SMALL, seed=0)
    return model, train(model, dataset, dataset, kg, stopwords, TrainConfig(**cfg))


def test_proposed_model_overfits_small_set(overfit_dataset, overfit_kg, stopwords):
    _, (best, history) = _fit(
        "proposed", overfit_dataset, overfit_kg, stopwords, batch_size=10, max_epochs=200, patience=200
    )
    assert TrainConfig().learning_rate == 1e-2
    last = history.epochs[-1]
    assert last.train_accuracy == 1.0
    assert min(r.train_loss for r in history.epochs) < 0.05


def test_training_updates_every_tensor(overfit_dataset, overfit_kg, stopwords):
    model, (best, _) = _fit(
        "proposed", overfit_dataset, overfit_kg, stopwords, learning_rate=0.02, max_epochs=3, patience=3
    )
    for name, before in model.parameters().items():
        assert not np.array_equal(before, best.parameters()[name]), name


def test_training_is_deterministic(overfit_dataset, overfit_kg, stopwords):
    runs = [
        _fit("proposed", overfit_dataset, overfit_kg, stopwords, max_epochs=4, seed=11)[1] for _ in range(2)
    ]
    assert runs[0][1].comparable() == runs[1][1].comparable()
    for name, t in runs[0][0].parameters().items():
        np.testing.assert_array_equal(t, runs[1][0].parameters()[name])


def test_best_snapshot_matches_best_epoch(overfit_dataset, overfit_kg, stopwords):
    _, (best, history) = _fit("baseline", overfit_dataset, overfit_kg, stopwords, learning_rate=0.02, max_epochs=6)
    assert 1 <= history.best_epoch <= len(history.epochs)
    best_loss = min(r.val_loss for r in history.epochs)
    assert history.epochs[history.best_epoch - 1].val_loss == best_loss


def test_divergence_raises_with_batch_index(overfit_dataset, overfit_kg, stopwords, monkeypatch):
    def broken(model, batch, labels):
        return float("nan"), {k: np.zeros_like(v) for k, v in model.parameters().items()}

    monkeypatch.setattr(trainer_module, "loss_and_grads", broken)
    with pytest.raises(TrainingDivergedError) as exc:
        _fit("baseline", overfit_dataset, overfit_kg, stopwords, max_epochs=2)
    assert exc.value.epoch == 1
    assert exc.value.batch_index == 0
    assert "clf.W1" in exc.value.param_norms


def test_empty_sets_are_rejected(overfit_dataset, overfit_kg, stopwords):
    model = build_model("baseline", overfit_dataset, None, SMALL)
    with pytest.raises(ValueError):
        train(model, overfit_dataset, LabeledDataset(), overfit_kg, stopwords)


def test_precomputed_training_facts_are_not_retrieved_again(overfit_dataset, overfit_kg, stopwords, monkeypatch):
    facts = precompute_facts(overfit_dataset, overfit_kg, stopwords)
    model = build_model("proposed", overfit_dataset, facts, SMALL, seed=0)
    val_set = LabeledDataset(examples=overfit_dataset.examples[:7])

    calls = []
    real = trainer_module.facts_for_hypothesis

    def counting(text, kg, sw):
        calls.append(text)
        return real(text, kg, sw)

    monkeypatch.setattr(trainer_module, "facts_for_hypothesis", counting)
    cfg = TrainConfig(max_epochs=2)
    reused = train(model, overfit_dataset, val_set, overfit_kg, stopwords, cfg, train_facts=facts)
    assert len(calls) == len(val_set)

    calls.clear()
    fresh = train(model, overfit_dataset, val_set, overfit_kg, stopwords, cfg)
    assert len(calls) == len(overfit_dataset) + len(val_set)
    assert reused[1].comparable() == fresh[1].comparable()


def test_fact_cache_must_match_training_set(overfit_dataset, overfit_kg, stopwords):
    facts = precompute_facts(overfit_dataset, overfit_kg, stopwords)
    model = build_model("proposed", overfit_dataset, facts, SMALL)
    with pytest.raises(ValueError, match="fact paragraphs"):
        train(model, overfit_dataset, overfit_dataset, overfit_kg, stopwords, train_facts=facts[:-1])
