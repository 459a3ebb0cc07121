import numpy as np
import pytest

from app.knowledge.kg_store import KnowledgeGraph, parse_kg_lines
from app.knowledge.processor import StopwordList, load_stopwords
from app.model.network import init_model
from app.model.text_encoding import build_vocab
from app.state import Example, Label, LabeledDataset, ModelConfig

COVID_KG_LINES = [
    "covid-19\tDISEBABKAN_OLEH\tsars-cov-2\n",
    "covid-19\tMEMILIKI_GEJALA\tbatuk\n",
]

COVID_QUERY = "Salah satu gejala Covid-19 adalah batuk"
COVID_PARAGRAPH = "covid-19 disebabkan oleh sars-cov-2. Covid-19 memiliki gejala batuk."


@pytest.fixture
def covid_kg() -> KnowledgeGraph:
    return parse_kg_lines(COVID_KG_LINES)


@pytest.fixture
def covid_kg_file(tmp_path):
    path = tmp_path / "covid.tsv"
    path.write_text("".join(COVID_KG_LINES), encoding="utf-8")
    return path


@pytest.fixture(scope="session")
def stopwords() -> StopwordList:
    return load_stopwords()


def tiny_model(variant: str, rng: np.random.Generator, vocab_words=("a", "b", "c", "d", "e"), d_e=3, d_h=4):
    vocab = build_vocab([" ".join(vocab_words)])
    cfg = ModelConfig(d_e=d_e, d_h=d_h, max_len_pair=6, max_len_fact=4, init_scale=0.5)
    return init_model(variant, vocab, cfg, rng)


OVERFIT_SOURCES = ["alfa", "bravo", "charlie", "delta", "echo", "foxtrot", "golf", "hotel", "india", "juliet"]


@pytest.fixture
def overfit_kg() -> KnowledgeGraph:
    lines = [f"{s}\tMEMILIKI_STATUS\t{'positif' if i % 2 == 0 else 'negatif'}\n" for i, s in enumerate(OVERFIT_SOURCES)]
    return parse_kg_lines(lines)


@pytest.fixture
def overfit_dataset() -> LabeledDataset:
    """30 examples, 10 per label; every hypothesis names a KG source or a fresh one."""
    examples = []
    for i, s in enumerate(OVERFIT_SOURCES):
        true_value = "positif" if i % 2 == 0 else "negatif"
        false_value = "negatif" if i % 2 == 0 else "positif"
        examples.append(Example(premise=f"laporan nomor {i}", hypothesis=f"{s} memiliki status {true_value}", label=Label.ENTAILMENT))
        examples.append(Example(premise=f"catatan nomor {i}", hypothesis=f"{s} memiliki status {false_value}", label=Label.CONTRADICTION))
        examples.append(Example(premise=f"berita nomor {i}", hypothesis=f"orang{i} memiliki status {true_value}", label=Label.NEUTRAL))
    return LabeledDataset(examples=examples)
