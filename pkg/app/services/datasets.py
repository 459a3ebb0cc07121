"""
Dataset ingestion, dedup, splitting, statistics and the offline
KG-grounded synthetic generator.

Dataset file format: UTF-8 JSON lines, one object per line with keys
premise, hypothesis and label (entailment | contradiction | neutral).
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

from app.config import settings
from app.knowledge.kg_store import KnowledgeGraph
from app.knowledge.processor import humanize_relation, match_entities, tokenize
from app.state import DatasetStats, DedupReport, Example, GenTemplate, Label, LabeledDataset, Triplet

logger = logging.getLogger(__name__)

TEST_FRACTION = 0.2
VAL_FRACTION = 0.2  # of the remainder after the test cut


class DatasetFormatError(ValueError):
    def __init__(self, line_number: int, reason: str):
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"line {line_number}: {reason}")


class SplitError(ValueError):
    pass


class GenerationError(RuntimeError):
    pass


# ============================================================
# I/O
# ============================================================


def load_dataset(path: Union[str, Path]) -> LabeledDataset:
    examples: List[Example] = []
    with open(path, "r", encoding="utf-8") as f:
        for line_number, raw in enumerate(f, start=1):
            if not raw.strip():
                continue
            try:
                record = json.loads(raw)
            except json.JSONDecodeError as e:
                raise DatasetFormatError(line_number, f"invalid JSON ({e.msg})") from None
            if not isinstance(record, dict):
                raise DatasetFormatError(line_number, "expected a JSON object")
            missing = [k for k in ("premise", "hypothesis", "label") if k not in record]
            if missing:
                raise DatasetFormatError(line_number, f"missing key(s): {', '.join(missing)}")
            try:
                examples.append(
                    Example(premise=record["premise"], hypothesis=record["hypothesis"], label=record["label"])
                )
            except ValidationError as e:
                reason = "; ".join(f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors())
                raise DatasetFormatError(line_number, reason) from None
    logger.info(f"📥 Loaded {len(examples)} examples from {path}")
    return LabeledDataset(examples=examples, provenance="loaded")


def load_templates(path: Optional[Union[str, Path]] = None) -> Dict[str, GenTemplate]:
    """Prompt templates keyed by kind; defaults to the shipped Indonesian set."""
    path = path or settings.DEFAULT_PROMPTS
    with open(path, "r", encoding="utf-8") as f:
        raw = json.load(f)
    templates = {}
    for item in raw:
        t = GenTemplate.model_validate(item)
        templates[t.kind] = t
    missing = {"paraphrase", "entailment", "neutral", "contradiction"} - set(templates)
    if missing:
        raise ValueError(f"{path} lacks templates for: {sorted(missing)}")
    return templates


def save_dataset(d: LabeledDataset, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for e in d.examples:
            f.write(json.dumps(e.model_dump(), ensure_ascii=False) + "\n")


# ============================================================
# Dedup
# ============================================================


def _pair_key(e: Example) -> Tuple[str, str]:
    return (e.premise.strip(), e.hypothesis.strip())


def dedup_report(d: LabeledDataset) -> DedupReport:
    first_label: Dict[Tuple[str, str], Label] = {}
    dropped = conflicts = 0
    for e in d.examples:
        key = _pair_key(e)
        if key in first_label:
            dropped += 1
            if first_label[key] != e.label:
                conflicts += 1
        else:
            first_label[key] = e.label
    return DedupReport(input_size=len(d), kept=len(first_label), dropped=dropped, conflicts=conflicts)


def dedup(d: LabeledDataset) -> LabeledDataset:
    """Keeps the first occurrence of each (premise, hypothesis) pair."""
    seen = set()
    kept: List[Example] = []
    for e in d.examples:
        key = _pair_key(e)
        if key not in seen:
            seen.add(key)
            kept.append(e)
    if len(kept) != len(d):
        report = dedup_report(d)
        logger.warning(f"⚠️ Dropped {report.dropped} duplicate pairs ({report.conflicts} with conflicting labels)")
    return LabeledDataset(examples=kept, provenance=d.provenance)


# ============================================================
# Split
# ============================================================


def split_sizes(n: int) -> Tuple[int, int, int]:
    """(train, val, test) under the two-stage 80:20 then 80:20 floor rule."""
    test = int(np.floor(TEST_FRACTION * n))
    rest = n - test
    val = int(np.floor(VAL_FRACTION * rest))
    return rest - val, val, test


def _cut(items: List[Example], n: int) -> Tuple[List[Example], List[Example], List[Example]]:
    train_n, val_n, test_n = split_sizes(n)
    test = items[:test_n]
    val = items[test_n : test_n + val_n]
    train = items[test_n + val_n :]
    return train, val, test


def split(
    d: LabeledDataset, seed: int = 0, stratified: bool = False
) -> Tuple[LabeledDataset, LabeledDataset, LabeledDataset]:
    n = len(d)
    if n < 5:
        raise SplitError(f"need at least 5 examples to split, got {n}")
    rng = np.random.default_rng(seed)

    if not stratified:
        order = rng.permutation(n)
        train, val, test = _cut([d.examples[i] for i in order], n)
    else:
        train, val, test = [], [], []
        for label in Label:
            members = [e for e in d.examples if e.label == label]
            if not members:
                continue
            tr_n, va_n, te_n = split_sizes(len(members))
            if min(tr_n, va_n, te_n) < 1:
                raise SplitError(
                    f"class {label.text!r} has {len(members)} examples; stratified split needs at least one per part"
                )
            order = rng.permutation(len(members))
            tr, va, te = _cut([members[i] for i in order], len(members))
            train += tr
            val += va
            test += te
        train, val, test = ([part[i] for i in rng.permutation(len(part))] for part in (train, val, test))

    logger.info(f"✂️ Split {n} examples -> train {len(train)}, val {len(val)}, test {len(test)}")
    return tuple(LabeledDataset(examples=list(part), provenance=d.provenance) for part in (train, val, test))


# ============================================================
# Statistics
# ============================================================


def dataset_stats(d: LabeledDataset) -> DatasetStats:
    counts = {label.text: 0 for label in Label}
    for e in d.examples:
        counts[e.label.text] += 1
    n = len(d)
    return DatasetStats(
        size=n,
        label_counts=counts,
        mean_premise_words=float(np.mean([len(e.premise.split()) for e in d.examples])) if n else 0.0,
        mean_hypothesis_words=float(np.mean([len(e.hypothesis.split()) for e in d.examples])) if n else 0.0,
    )


# ============================================================
# KG-grounded synthetic task
# ============================================================

FILLER_PREMISES = (
    "berikut adalah sebuah pernyataan",
    "periksa kebenaran pernyataan berikut",
    "pernyataan ini perlu diverifikasi",
    "informasi berikut beredar di masyarakat",
    "sebuah klaim diterima untuk diperiksa",
)

# On a one-triplet-per-source KG with >= 2 * n_per_label triplets (see
# build_status_kg) every entity label occurs at most twice: once in its
# hypothesis, once in its fact sentence. A vocabulary built with this cutoff
# maps all of them to [UNK], so entity identity carries no label signal.
ENTITY_MIN_FREQ = 3


def build_status_kg(n_sources: int, seed: int = 0, relation: str = "MEMILIKI_STATUS") -> KnowledgeGraph:
    """One triplet per fresh source, target drawn from {positif, negatif}."""
    rng = np.random.default_rng(seed)
    values = ("positif", "negatif")
    return KnowledgeGraph(
        Triplet(source=f"entitas{i:05d}", relation=relation, target=values[int(rng.integers(2))])
        for i in range(n_sources)
    )


def assert_sentence(source: str, relation: str, target: str) -> str:
    return f"{source} {humanize_relation(relation)} {target}"


def _contradiction_target(kg: KnowledgeGraph, t: Triplet, rng: np.random.Generator) -> Optional[str]:
    related = {x.target.lower() for x in kg.triplets_from_source(t.source) if x.relation == t.relation}
    pool = [x for x in kg.targets_of_relation(t.relation) if x.lower() not in related]
    if not pool:
        all_targets = list(dict.fromkeys(x.target for x in kg.triplets))
        pool = [x for x in all_targets if x.lower() not in related]
    if not pool:
        return None
    return pool[int(rng.integers(len(pool)))]


def _fresh_entity(kg: KnowledgeGraph, k: int) -> str:
    label = f"entitas-baru-{k}"
    while label in kg:
        k += 1_000_003
        label = f"entitas-baru-{k}"
    return label


def generate_kg_grounded(kg: KnowledgeGraph, n_per_label: int, seed: int = 0) -> LabeledDataset:
    """
    Builds a balanced task whose labels can only be decided from the KG:

    * entailment: "s r t" for a KG triplet (s, r, t)
    * contradiction: "s r t'" with t' never related to s by r
    * neutral: "x r t" about an entity x absent from the KG

    Premises are drawn from a fixed pool of uninformative fillers shared by
    all labels. Triplets are visited in a seeded permutation, entailment and
    contradiction taking disjoint slices while the KG is large enough.
    """
    if len(kg) == 0:
        raise GenerationError("KG is empty")
    if n_per_label < 1:
        raise ValueError("n_per_label must be >= 1")
    rng = np.random.default_rng(seed)
    triplets = list(kg.triplets)
    order = [triplets[i] for i in rng.permutation(len(triplets))]

    def cycle(offset: int):
        i = offset
        while True:
            yield order[i % len(order)]
            i += 1

    def premise() -> str:
        return FILLER_PREMISES[int(rng.integers(len(FILLER_PREMISES)))]

    entailment: List[Example] = []
    source = cycle(0)
    for _ in range(n_per_label):
        t = next(source)
        entailment.append(Example(premise=premise(), hypothesis=assert_sentence(t.source, t.relation, t.target), label=Label.ENTAILMENT))

    contradiction: List[Example] = []
    source = cycle(n_per_label)
    misses = 0
    while len(contradiction) < n_per_label:
        t = next(source)
        target = _contradiction_target(kg, t, rng)
        if target is None:
            misses += 1
            if misses >= len(order):
                raise GenerationError(
                    "KG too small to sample contradictions (needs at least 2 distinct targets per relation domain)"
                )
            continue
        misses = 0
        contradiction.append(Example(premise=premise(), hypothesis=assert_sentence(t.source, t.relation, target), label=Label.CONTRADICTION))

    neutral: List[Example] = []
    source = cycle(2 * n_per_label)
    attempts = misses = 0
    while len(neutral) < n_per_label:
        t = next(source)
        attempts += 1
        hypothesis = assert_sentence(_fresh_entity(kg, attempts), t.relation, t.target)
        if match_entities(tokenize(hypothesis), kg):
            # the relation words or target are themselves KG sources
            misses += 1
            if misses >= len(order):
                raise GenerationError("cannot build a neutral hypothesis that avoids every KG source entity")
            continue
        misses = 0
        neutral.append(Example(premise=premise(), hypothesis=hypothesis, label=Label.NEUTRAL))

    examples = entailment + contradiction + neutral
    examples = [examples[i] for i in rng.permutation(len(examples))]
    logger.info(f"🧪 Generated KG-grounded dataset: {len(examples)} examples ({n_per_label} per label)")
    return LabeledDataset(examples=examples, provenance="generated")
