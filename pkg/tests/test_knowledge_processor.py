import numpy as np
import pytest

from app.knowledge.kg_store import parse_kg_lines
from app.knowledge.processor import (
    StopwordFormatError,
    StopwordList,
    build_fact_paragraph,
    facts_for_hypothesis,
    load_stopwords,
    match_entities,
    preprocess_query,
    tokenize,
    trace_retrieval,
    verbalize_triplet,
)
from app.state import Triplet
from tests.conftest import COVID_KG_LINES, COVID_PARAGRAPH, COVID_QUERY


def test_retrieval_steps_on_covid_example(covid_kg, stopwords):
    trace = trace_retrieval(COVID_QUERY, covid_kg, stopwords)
    assert trace.words == ["salah", "satu", "gejala", "covid-19", "batuk"]
    assert trace.entities == ["covid-19"]
    assert [t.as_tuple() for t in trace.triplets] == [
        ("covid-19", "DISEBABKAN_OLEH", "sars-cov-2"),
        ("covid-19", "MEMILIKI_GEJALA", "batuk"),
    ]
    assert trace.sentences == ["covid-19 disebabkan oleh sars-cov-2", "covid-19 memiliki gejala batuk"]
    assert trace.paragraph == COVID_PARAGRAPH


def test_verbalize_english_example():
    t = Triplet(source="COVID-19", relation="HAVE_SYMPTOM", target="cough")
    assert verbalize_triplet(t) == "COVID-19 have symptom cough"


def test_tokenize_strips_edge_punctuation_only():
    assert tokenize("Apakah (COVID-19), sars-cov-2?!") == ["apakah", "covid-19", "sars-cov-2"]
    assert tokenize("  ... ") == []


def test_empty_and_unknown_text_give_empty_paragraph(covid_kg, stopwords):
    for text in ("", "kucing makan ikan"):
        facts = facts_for_hypothesis(text, covid_kg, stopwords)
        assert facts.is_empty
        assert facts.text == ""
        assert facts.provenance == []


def test_matched_entity_order_follows_query_and_dedups():
    kg = parse_kg_lines(["b\tR\tx", "a\tR\ty"])
    assert match_entities(["a", "b", "a", "z"], kg) == ["a", "b"]
    facts = facts_for_hypothesis("a b a", kg, StopwordList())
    assert facts.text == "a r y. B r x."


def test_stopwords_never_match_entities(stopwords):
    kg = parse_kg_lines(["adalah\tR\tx"])
    assert facts_for_hypothesis("covid-19 adalah batuk", kg, stopwords).is_empty
    assert preprocess_query("Adalah yang", stopwords) == []


def test_duplicate_triplets_repeat_unless_deduped(stopwords):
    kg = parse_kg_lines(["a\tR\tb", "a\tR\tb"])
    assert len(trace_retrieval("a", kg, stopwords).sentences) == 2
    assert len(trace_retrieval("a", kg, stopwords, dedup_triplets=True).sentences) == 1


def test_paragraph_capitalizes_later_sentences_only():
    assert build_fact_paragraph([]) == ""
    assert build_fact_paragraph(["x y"]) == "x y."
    assert build_fact_paragraph(["x y", "z w", "ä b"]) == "x y. Z w. Ä b."


def test_provenance_is_parallel_to_sentences(covid_kg, stopwords):
    facts = facts_for_hypothesis(COVID_QUERY, covid_kg, stopwords)
    assert [verbalize_triplet(t) for t in facts.provenance] == facts.sentences


def test_stopword_file_rejects_multiword_lines(tmp_path):
    path = tmp_path / "stop.txt"
    path.write_text("dan\nyang itu\n", encoding="utf-8")
    with pytest.raises(StopwordFormatError) as exc:
        load_stopwords(path)
    assert exc.value.line_number == 2


def test_default_stopwords_cover_function_words(stopwords):
    assert "adalah" in stopwords
    assert "gejala" not in stopwords


QUERY_POOL = ["covid-19", "influenza", "batuk", "demam", "adalah", "gejala", "pada", "Flu", "sars-cov-2"]


def _random_kg(rng, n):
    sources = ["covid-19", "influenza", "flu", "batuk", "campak"]
    lines = [
        f"{sources[int(rng.integers(len(sources)))]}\tREL_{int(rng.integers(3))}\tnilai{int(rng.integers(6))}\n"
        for _ in range(n)
    ]
    return parse_kg_lines(lines)


def _random_query(rng):
    return " ".join(QUERY_POOL[int(i)] for i in rng.integers(len(QUERY_POOL), size=int(rng.integers(1, 7))))


def test_unrelated_source_leaves_facts_unchanged(covid_kg, stopwords):
    extended = parse_kg_lines(COVID_KG_LINES + ["influenza\tMEMILIKI_GEJALA\tdemam\n"])
    assert facts_for_hypothesis(COVID_QUERY, extended, stopwords) == facts_for_hypothesis(COVID_QUERY, covid_kg, stopwords)

    rng = np.random.default_rng(7)
    for _ in range(200):
        kg = _random_kg(rng, int(rng.integers(0, 12)))
        query = _random_query(rng)
        words = {w.lower() for w in tokenize(query)}
        extra = next(s for s in ("campak", "rubela", "cacar") if s not in words)
        grown = parse_kg_lines([f"{t.source}\t{t.relation}\t{t.target}\n" for t in kg.triplets] + [f"{extra}\tREL_0\tx\n"])
        assert facts_for_hypothesis(query, grown, stopwords) == facts_for_hypothesis(query, kg, stopwords)


def test_more_stopwords_never_add_triplets():
    rng = np.random.default_rng(8)
    for _ in range(200):
        kg = _random_kg(rng, int(rng.integers(1, 12)))
        query = _random_query(rng)
        base = StopwordList(QUERY_POOL[int(i)] for i in rng.integers(len(QUERY_POOL), size=2))
        larger = base.union(QUERY_POOL[int(i)] for i in rng.integers(len(QUERY_POOL), size=3))
        small = facts_for_hypothesis(query, kg, larger).provenance
        full = facts_for_hypothesis(query, kg, base).provenance
        assert set(small) <= set(full)
        assert len(small) <= len(full)


def test_paragraph_splits_back_into_sentences(covid_kg, stopwords):
    rng = np.random.default_rng(9)
    cases = [(COVID_QUERY, covid_kg)] + [(_random_query(rng), _random_kg(rng, 10)) for _ in range(200)]
    for query, kg in cases:
        facts = facts_for_hypothesis(query, kg, stopwords)
        if facts.is_empty:
            continue
        assert facts.text.endswith(".")
        parts = facts.text[:-1].split(". ")
        assert parts[0] == facts.sentences[0]
        assert parts[1:] == [s[:1].upper() + s[1:] for s in facts.sentences[1:]]
