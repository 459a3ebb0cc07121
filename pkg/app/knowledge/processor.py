"""
Knowledge processor: word-matching retrieval of KG facts for a hypothesis.

    hypothesis -> words -> matched source entities -> triplets
               -> fact sentences -> fact paragraph
"""

import logging
import unicodedata
from pathlib import Path
from typing import FrozenSet, Iterable, List, Optional, Union

from app.config import settings
from app.knowledge.kg_store import KnowledgeGraph
from app.state import FactParagraph, RetrievalTrace, Triplet

logger = logging.getLogger(__name__)


class StopwordFormatError(ValueError):
    def __init__(self, line_number: int, reason: str):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {reason}")


class StopwordList:
    """Set of lowercase single words."""

    __slots__ = ("_words",)

    def __init__(self, words: Iterable[str] = ()):
        cleaned = set()
        for w in words:
            w = w.strip().lower()
            if not w:
                continue
            if any(ch.isspace() for ch in w):
                raise ValueError(f"stopword contains whitespace: {w!r}")
            cleaned.add(w)
        self._words: FrozenSet[str] = frozenset(cleaned)

    @property
    def words(self) -> FrozenSet[str]:
        return self._words

    def __contains__(self, word: str) -> bool:
        return word in self._words

    def __len__(self) -> int:
        return len(self._words)

    def union(self, other: Iterable[str]) -> "StopwordList":
        return StopwordList(self._words | set(other))


def load_stopwords(path: Optional[Union[str, Path]] = None) -> StopwordList:
    """Loads a stopword file; no path means the shipped Indonesian list."""
    path = Path(path) if path else settings.DEFAULT_STOPWORDS
    words = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if any(ch.isspace() for ch in line):
                raise StopwordFormatError(line_number, f"one word per line expected, got {line!r}")
            words.append(line)
    stopwords = StopwordList(words)
    logger.debug(f"Loaded {len(stopwords)} stopwords from {path}")
    return stopwords


# ============================================================
# Tokenization
# ============================================================


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _strip_edge_punct(token: str) -> str:
    start, end = 0, len(token)
    while start < end and _is_punct(token[start]):
        start += 1
    while end > start and _is_punct(token[end - 1]):
        end -= 1
    return token[start:end]


def tokenize(text: str) -> List[str]:
    """Lowercase, split on whitespace, strip punctuation at token edges only."""
    tokens = []
    for raw in text.lower().split():
        token = _strip_edge_punct(raw)
        if token:
            tokens.append(token)
    return tokens


# ============================================================
# Retrieval steps
# ============================================================


def preprocess_query(text: str, stopwords: StopwordList) -> List[str]:
    return [w for w in tokenize(text) if w not in stopwords]


def match_entities(words: List[str], kg: KnowledgeGraph) -> List[str]:
    matched: List[str] = []
    seen = set()
    for w in words:
        if w in kg.source_index and w not in seen:
            seen.add(w)
            matched.append(w)
    return matched


def retrieve_triplets(entities: List[str], kg: KnowledgeGraph) -> List[Triplet]:
    triplets: List[Triplet] = []
    for entity in entities:
        triplets.extend(kg.triplets_from_source(entity))
    return triplets


def humanize_relation(relation: str) -> str:
    return relation.lower().replace("_", " ")


def verbalize_triplet(t: Triplet) -> str:
    return f"{t.source} {humanize_relation(t.relation)} {t.target}"


def build_fact_paragraph(sentences: List[str]) -> str:
    # First sentence stays as-is; later ones get an uppercase first letter.
    if not sentences:
        return ""
    parts = [sentences[0]] + [s[:1].upper() + s[1:] for s in sentences[1:]]
    return ". ".join(parts) + "."


def _dedup_triplets(triplets: List[Triplet]) -> List[Triplet]:
    seen = set()
    unique = []
    for t in triplets:
        if t.as_tuple() not in seen:
            seen.add(t.as_tuple())
            unique.append(t)
    return unique


def trace_retrieval(
    text: str,
    kg: KnowledgeGraph,
    stopwords: StopwordList,
    dedup_triplets: bool = False,
) -> RetrievalTrace:
    words = preprocess_query(text, stopwords)
    entities = match_entities(words, kg)
    triplets = retrieve_triplets(entities, kg)
    if dedup_triplets:
        triplets = _dedup_triplets(triplets)
    sentences = [verbalize_triplet(t) for t in triplets]
    return RetrievalTrace(
        text=text,
        words=words,
        entities=entities,
        triplets=triplets,
        sentences=sentences,
        paragraph=build_fact_paragraph(sentences),
    )


def facts_for_hypothesis(
    text: str,
    kg: KnowledgeGraph,
    stopwords: StopwordList,
    dedup_triplets: bool = False,
) -> FactParagraph:
    trace = trace_retrieval(text, kg, stopwords, dedup_triplets=dedup_triplets)
    return FactParagraph(sentences=trace.sentences, provenance=trace.triplets, text=trace.paragraph)
