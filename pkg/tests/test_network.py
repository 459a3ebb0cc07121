import math

import numpy as np
import pytest

from app.knowledge.kg_store import KnowledgeGraph, parse_kg_lines
from app.model.network import (
    EncodedBatch,
    Model,
    encode_examples,
    forward,
    forward_batch,
    loss,
    loss_and_grads,
    predict,
    zero_model,
)
from app.model.text_encoding import build_vocab
from app.state import Label, ModelConfig
from tests.conftest import COVID_PARAGRAPH, COVID_QUERY, tiny_model


def _random_batch(m: Model, rng: np.random.Generator, size: int) -> EncodedBatch:
    V = len(m.vocab)
    L, F = m.config.max_len_pair, m.config.max_len_fact
    pair_lengths = rng.integers(0, L + 1, size=size)
    pair_ids = np.where(np.arange(L)[None, :] < pair_lengths[:, None], rng.integers(1, V, size=(size, L)), 0)
    batch = EncodedBatch(pair_ids=pair_ids, pair_lengths=pair_lengths)
    if m.uses_facts:
        fact_lengths = rng.integers(0, F + 1, size=size)
        batch.fact_ids = np.where(np.arange(F)[None, :] < fact_lengths[:, None], rng.integers(1, V, size=(size, F)), 0)
        batch.fact_lengths = fact_lengths
    return batch


@pytest.mark.parametrize("trial", range(24))
def test_gradients_match_central_differences(trial):
    rng = np.random.default_rng(1000 + trial)
    variant = "proposed" if trial % 2 == 0 else "baseline"
    m = tiny_model(variant, rng, d_e=int(rng.integers(1, 5)), d_h=int(rng.integers(1, 5)))
    batch = _random_batch(m, rng, size=4)
    labels = rng.integers(0, 3, size=4)

    _, grads = loss_and_grads(m, batch, labels)
    h = 1e-5
    for name, tensor in m.parameters().items():
        for idx in np.ndindex(tensor.shape):
            old = tensor[idx]
            tensor[idx] = old + h
            up = loss(forward_batch(m, batch).probs, labels)
            tensor[idx] = old - h
            down = loss(forward_batch(m, batch).probs, labels)
            tensor[idx] = old
            numeric = (up - down) / (2 * h)
            analytic = grads[name][idx]
            scale = max(abs(numeric), abs(analytic), 1e-5)
            assert abs(numeric - analytic) / scale < 1e-4, f"{variant} {name}{idx}: {analytic} vs {numeric}"


def _scalar_forward(m: Model, pair_ids, fact_ids):
    """Loop-based reference for one example."""

    def encode(enc, ids):
        d_e, d_h = enc.W.shape[1], enc.W.shape[0]
        pooled = [0.0] * d_e
        for i in ids:
            for k in range(d_e):
                pooled[k] += enc.E[i][k] / len(ids)
        return [math.tanh(sum(enc.W[j][k] * pooled[k] for k in range(d_e)) + enc.b[j]) for j in range(d_h)]

    z = encode(m.nli_encoder, pair_ids)
    if m.uses_facts:
        z = z + encode(m.fact_encoder, fact_ids)
    c = m.classifier
    r = [max(0.0, sum(c.W1[j][k] * z[k] for k in range(len(z))) + c.b1[j]) for j in range(len(c.b1))]
    logits = [sum(c.W2[i][j] * r[j] for j in range(len(r))) + c.b2[i] for i in range(3)]
    top = max(logits)
    exps = [math.exp(x - top) for x in logits]
    return [e / sum(exps) for e in exps]


def test_forward_matches_scalar_reference():
    rng = np.random.default_rng(3)
    m = tiny_model("proposed", rng)
    probs = forward(m, "a b", "c d e", "b e")
    pair = m.vocab.ids("a b") + [2] + m.vocab.ids("c d e")
    expected = _scalar_forward(m, pair, m.vocab.ids("b e"))
    np.testing.assert_allclose(probs, expected, rtol=1e-12)
    assert probs.sum() == pytest.approx(1.0)


def test_fused_vector_puts_nli_before_facts():
    rng = np.random.default_rng(5)
    m = tiny_model("proposed", rng)
    d_h = m.config.d_h
    batch = encode_examples(m, ["a"], ["b"], ["c d"])
    cache = forward_batch(m, batch)
    np.testing.assert_allclose(cache.z[:, :d_h], cache.nli.h)
    np.testing.assert_allclose(cache.z[:, d_h:], cache.fact.h)

    m.classifier.W1[:, d_h:] = 0.0
    np.testing.assert_allclose(forward(m, "a", "b", "c d"), forward(m, "a", "b", "e"))


def test_zero_model_is_uniform_and_ties_go_to_entailment(covid_kg, stopwords):
    vocab = build_vocab(["a b"])
    m = zero_model("proposed", vocab, ModelConfig(d_e=2, d_h=2))
    label, probs, _ = predict(m, "a", "b", covid_kg, stopwords)
    np.testing.assert_allclose(probs, [1 / 3, 1 / 3, 1 / 3])
    assert label == Label.ENTAILMENT


def test_predict_retrieves_facts_for_proposed_only(covid_kg, stopwords):
    rng = np.random.default_rng(0)
    proposed = tiny_model("proposed", rng)
    baseline = tiny_model("baseline", rng)
    _, _, facts = predict(proposed, "premis", COVID_QUERY, covid_kg, stopwords)
    assert facts.text == COVID_PARAGRAPH
    _, _, facts = predict(baseline, "premis", COVID_QUERY, covid_kg, stopwords)
    assert facts.is_empty


def test_loss_clamps_zero_probability():
    assert loss(np.asarray([1.0, 0.0, 0.0]), 1) == pytest.approx(-math.log(1e-12))
    assert loss(np.asarray([[0.5, 0.25, 0.25], [0.25, 0.5, 0.25]]), [0, 1]) == pytest.approx(-math.log(0.5))


def test_variant_shape_mismatch_is_rejected():
    rng = np.random.default_rng(0)
    proposed = tiny_model("proposed", rng)
    with pytest.raises(ValueError):
        Model(
            variant="baseline",
            vocab=proposed.vocab,
            nli_encoder=proposed.nli_encoder,
            classifier=proposed.classifier,
            config=proposed.config,
        )


def test_copy_is_independent():
    m = tiny_model("baseline", np.random.default_rng(0))
    c = m.copy()
    c.classifier.W1 += 1.0
    assert not np.allclose(m.classifier.W1, c.classifier.W1)


def test_baseline_output_ignores_the_knowledge_graph(covid_kg, stopwords):
    m = tiny_model("baseline", np.random.default_rng(31), vocab_words=("covid-19", "batuk", "gejala", "sars-cov-2", "premis"))
    other_kg = parse_kg_lines(["covid-19\tMEMILIKI_GEJALA\tdemam\n", "batuk\tADALAH\tgejala\n"])
    outputs = [predict(m, "premis", COVID_QUERY, kg, stopwords)[1] for kg in (covid_kg, KnowledgeGraph([]), other_kg)]
    assert np.array_equal(outputs[0], outputs[1])
    assert np.array_equal(outputs[0], outputs[2])


def test_baseline_forward_ignores_fact_text():
    m = tiny_model("baseline", np.random.default_rng(32))
    assert np.array_equal(forward(m, "a b", "c d", "X"), forward(m, "a b", "c d", ""))
    assert np.array_equal(forward(m, "a b", "c d", COVID_PARAGRAPH), forward(m, "a b", "c d"))


def test_loss_known_values():
    uniform = np.full(3, 1.0 / 3.0)
    for gold in Label:
        assert loss(uniform, gold) == pytest.approx(math.log(3), abs=1e-12)
    assert loss(np.array([0.7, 0.2, 0.1]), 1) == pytest.approx(-math.log(0.2), abs=1e-12)
    assert loss(np.array([[0.7, 0.2, 0.1], [0.7, 0.2, 0.1]]), [1, 1]) == pytest.approx(-math.log(0.2), abs=1e-12)
