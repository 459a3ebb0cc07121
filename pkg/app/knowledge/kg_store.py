"""
Knowledge graph store: TSV ingestion, validation and a source-entity index.

File format (UTF-8): one triplet per line, `source<TAB>relation<TAB>target`.
Lines starting with '#' and blank lines are ignored. Duplicates are kept.
"""

import logging
from pathlib import Path
from types import MappingProxyType
from typing import Dict, Iterable, List, Mapping, Sequence, Set, Tuple, Union

from pydantic import ValidationError

from app.state import Triplet

logger = logging.getLogger(__name__)


class KGParseError(ValueError):
    def __init__(self, line_number: int, reason: str):
        self.line_number = line_number
        self.reason = reason
        super().__init__(f"line {line_number}: {reason}")


class KnowledgeGraph:
    """
    Immutable list of triplets in file order plus an index from
    lowercase source label to ascending triplet positions.
    """

    __slots__ = ("_triplets", "_source_index")

    def __init__(self, triplets: Iterable[Triplet]):
        triplets = tuple(triplets)
        index: Dict[str, List[int]] = {}
        for position, t in enumerate(triplets):
            index.setdefault(t.source_key, []).append(position)
        self._triplets: Tuple[Triplet, ...] = triplets
        self._source_index: Mapping[str, Tuple[int, ...]] = MappingProxyType(
            {k: tuple(v) for k, v in index.items()}
        )

    @property
    def triplets(self) -> Tuple[Triplet, ...]:
        return self._triplets

    @property
    def source_index(self) -> Mapping[str, Tuple[int, ...]]:
        return self._source_index

    def __len__(self) -> int:
        return len(self._triplets)

    def __contains__(self, entity: str) -> bool:
        return entity.lower() in self._source_index

    def triplets_from_source(self, entity: str) -> List[Triplet]:
        positions = self._source_index.get(entity.lower(), ())
        return [self._triplets[p] for p in positions]

    @property
    def sources(self) -> List[str]:
        return list(self._source_index.keys())

    @property
    def entity_count(self) -> int:
        entities: Set[str] = set()
        for t in self._triplets:
            entities.add(t.source_key)
            entities.add(t.target.lower())
        return len(entities)

    @property
    def duplicate_count(self) -> int:
        return len(self._triplets) - len({t.as_tuple() for t in self._triplets})

    def contains(self, source: str, relation: str, target: str) -> bool:
        target = target.lower()
        return any(
            t.relation == relation and t.target.lower() == target
            for t in self.triplets_from_source(source)
        )

    def targets_of_relation(self, relation: str) -> List[str]:
        """Distinct targets of a relation, first-seen order."""
        seen: Dict[str, None] = {}
        for t in self._triplets:
            if t.relation == relation:
                seen.setdefault(t.target, None)
        return list(seen)


def parse_kg_lines(lines: Sequence[str]) -> KnowledgeGraph:
    triplets: List[Triplet] = []
    for line_number, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        columns = line.split("\t")
        if len(columns) != 3:
            raise KGParseError(line_number, f"expected 3 tab-separated columns, found {len(columns)}")
        try:
            triplets.append(Triplet(source=columns[0], relation=columns[1], target=columns[2]))
        except ValidationError as e:
            reason = "; ".join(err["msg"] for err in e.errors())
            raise KGParseError(line_number, reason) from None
    return KnowledgeGraph(triplets)


def load_kg(path: Union[str, Path]) -> KnowledgeGraph:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except (OSError, UnicodeDecodeError) as e:
        logger.error(f"❌ Failed to read KG file {path}: {e}")
        raise

    try:
        kg = parse_kg_lines(lines)
    except KGParseError as e:
        logger.error(f"❌ Malformed KG file {path} at line {e.line_number}: {e.reason}")
        raise

    logger.info(f"📚 Loaded KG from {path.name}: {len(kg)} triplets, {len(kg.source_index)} source entities")
    if kg.duplicate_count:
        logger.info(f"   Duplicate triplets retained: {kg.duplicate_count}")
    return kg


def save_kg(kg: KnowledgeGraph, path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for t in kg.triplets:
            f.write(f"{t.source}\t{t.relation}\t{t.target}\n")


def triplets_from_source(kg: KnowledgeGraph, entity: str) -> List[Triplet]:
    return kg.triplets_from_source(entity)
