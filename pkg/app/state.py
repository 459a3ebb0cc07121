import re
from enum import IntEnum
from typing import Any, Dict, List, Literal, Optional

from langchain_core.prompts import PromptTemplate
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator

from app.config import settings

# ============================================================
# Labels
# ============================================================


class Label(IntEnum):
    """NLI classes. The integer encoding is part of the checkpoint format."""

    ENTAILMENT = 0
    CONTRADICTION = 1
    NEUTRAL = 2

    @property
    def text(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, value: Any) -> "Label":
        if isinstance(value, Label):
            return value
        if isinstance(value, int) and not isinstance(value, bool):
            return cls(value)
        if isinstance(value, str):
            key = value.strip().upper()
            if key in cls.__members__:
                return cls[key]
        raise ValueError(f"unknown label: {value!r} (expected entailment, contradiction or neutral)")


NUM_LABELS = len(Label)


# ============================================================
# Knowledge graph
# ============================================================

RELATION_PATTERN = re.compile(r"^[^\W_]+(?:_[^\W_]+)*$")


class Triplet(BaseModel):
    """One KG edge {e^s, r, e^t}. Labels keep their original casing."""

    model_config = ConfigDict(frozen=True)

    source: str
    relation: str
    target: str

    @field_validator("source", "relation", "target")
    @classmethod
    def _non_empty(cls, v: str) -> str:
        v = v.strip()
        if not v:
            raise ValueError("empty field")
        if "\t" in v:
            raise ValueError("tab inside label")
        return v

    @field_validator("relation")
    @classmethod
    def _relation_shape(cls, v: str) -> str:
        if not RELATION_PATTERN.match(v):
            raise ValueError(f"invalid relation label {v!r} (expected WORDS_JOINED_BY_UNDERSCORES)")
        return v

    @property
    def source_key(self) -> str:
        return self.source.lower()

    def as_tuple(self) -> tuple:
        return (self.source, self.relation, self.target)


class FactParagraph(BaseModel):
    sentences: List[str] = Field(default_factory=list)
    provenance: List[Triplet] = Field(default_factory=list)
    text: str = ""

    @model_validator(mode="after")
    def _parallel(self) -> "FactParagraph":
        if len(self.sentences) != len(self.provenance):
            raise ValueError("sentences and provenance must be parallel lists")
        if (not self.sentences) != (self.text == ""):
            raise ValueError("empty paragraph must have empty text")
        return self

    @property
    def is_empty(self) -> bool:
        return not self.sentences


class RetrievalTrace(BaseModel):
    """Every intermediate step of fact-paragraph generation for one query."""

    text: str
    words: List[str]
    entities: List[str]
    triplets: List[Triplet]
    sentences: List[str]
    paragraph: str


# ============================================================
# Datasets
# ============================================================


class Example(BaseModel):
    premise: str
    hypothesis: str
    label: Label

    @field_validator("premise", "hypothesis")
    @classmethod
    def _not_blank(cls, v: str) -> str:
        if not v.strip():
            raise ValueError("must be non-empty")
        return v

    @field_validator("label", mode="before")
    @classmethod
    def _parse_label(cls, v: Any) -> Label:
        return Label.parse(v)

    @field_serializer("label")
    def _label_text(self, label: Label) -> str:
        return label.text


class LabeledDataset(BaseModel):
    examples: List[Example] = Field(default_factory=list)
    provenance: Literal["loaded", "generated"] = "loaded"

    def __len__(self) -> int:
        return len(self.examples)

    def labels(self) -> List[int]:
        return [int(e.label) for e in self.examples]


class DedupReport(BaseModel):
    input_size: int
    kept: int
    dropped: int
    conflicts: int  # dropped duplicates whose label differed from the kept one


class DatasetStats(BaseModel):
    size: int
    label_counts: Dict[str, int]
    mean_premise_words: float
    mean_hypothesis_words: float


REQUIRED_PLACEHOLDERS = {
    "entailment": {"s", "n", "l"},
    "neutral": {"s", "n", "l"},
    "contradiction": {"s", "n", "l"},
    "paraphrase": {"s", "l"},
}


class GenTemplate(BaseModel):
    kind: Literal["entailment", "neutral", "contradiction", "paraphrase"]
    template: str

    @model_validator(mode="after")
    def _placeholders(self) -> "GenTemplate":
        found = set(PromptTemplate.from_template(self.template).input_variables)
        missing = REQUIRED_PLACEHOLDERS[self.kind] - found
        if missing:
            raise ValueError(f"{self.kind} template is missing placeholders: {sorted(missing)}")
        return self

    def render(self, s: str, n: Optional[int] = None, l: Optional[int] = None) -> str:
        prompt = PromptTemplate.from_template(self.template)
        values = {"s": s, "n": n, "l": l}
        return prompt.format(**{k: values[k] for k in prompt.input_variables})


class GenConfig(BaseModel):
    n_paraphrases: int = Field(default=3, ge=1)
    n_hypotheses: int = Field(default=5, ge=1)
    max_words: int = Field(default=20, ge=1)
    api_url: str = Field(default_factory=lambda: settings.FACTGEN_API_URL)
    model: str = Field(default_factory=lambda: settings.FACTGEN_API_MODEL)
    temperature: float = 0.7
    retries: int = Field(default=3, ge=0)
    backoff_seconds: float = Field(default=1.0, ge=0.0)
    timeout_seconds: float = 60.0
    max_workers: int = Field(default=1, ge=1)
    keep_original: bool = True
    audit_log: Optional[str] = Field(default_factory=lambda: settings.FACTGEN_AUDIT_LOG)


class GenerationState(BaseModel):
    """LangGraph state for the remote generation workflow."""

    seeds: List[str] = Field(default_factory=list)
    premises: List[str] = Field(default_factory=list)
    examples: List[Example] = Field(default_factory=list)
    requests_made: int = 0
    skipped_responses: int = 0
    dedup: Optional[DedupReport] = None


# ============================================================
# Model + training
# ============================================================


class ModelConfig(BaseModel):
    d_e: int = Field(default=32, ge=1)
    d_h: int = Field(default=32, ge=1)
    max_len_pair: int = Field(default=64, ge=3)
    max_len_fact: int = Field(default=64, ge=1)
    init_scale: float = Field(default=0.1, gt=0.0)


class TrainConfig(BaseModel):
    learning_rate: float = Field(default=1e-2, gt=0.0)
    batch_size: int = Field(default=16, ge=1)
    max_epochs: int = Field(default=16, ge=1)
    patience: int = Field(default=5, ge=0)
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    monitor: Literal["val_loss"] = "val_loss"
    fact_workers: int = Field(default=1, ge=1)

    @classmethod
    def finetune_preset(cls, **overrides: Any) -> "TrainConfig":
        """Fine-tuning values for a pretrained encoder."""
        return cls(**{"learning_rate": 2e-5, "batch_size": 16, "max_epochs": 16, "patience": 5, **overrides})


class Metrics(BaseModel):
    confusion: List[List[int]]  # rows = gold, cols = predicted
    precision: float
    recall: float
    f1: float
    accuracy: float
    per_class_true: List[int]
    per_class_precision: List[float] = Field(default_factory=list)
    per_class_recall: List[float] = Field(default_factory=list)
    per_class_f1: List[float] = Field(default_factory=list)
    support: List[int] = Field(default_factory=list)


class EpochRecord(BaseModel):
    epoch: int  # 1-based
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_metrics: Metrics
    seconds: float = 0.0


class TrainHistory(BaseModel):
    epochs: List[EpochRecord] = Field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def comparable(self) -> Dict[str, Any]:
        """History without wall-clock fields, for determinism checks."""
        return self.model_dump(exclude={"epochs": {"__all__": {"seconds"}}})


# ============================================================
# Evaluation
# ============================================================


class WilcoxonResult(BaseModel):
    n_effective: int
    w_plus: float
    w_minus: float
    statistic: float  # min(W+, W-)
    p_value: float
    method: Literal["exact", "normal", "degenerate"]


class MisclassifiedExample(BaseModel):
    premise: str
    hypothesis: str
    fact_paragraph: str
    gold: Label
    predicted: Label
    probabilities: List[float]

    @field_serializer("gold", "predicted")
    def _label_text(self, label: Label) -> str:
        return label.text


class EvaluationReport(BaseModel):
    metrics: Metrics
    size: int
    empty_fact_paragraphs: int


class ComparisonReport(BaseModel):
    baseline: Metrics
    proposed: Metrics
    wilcoxon: WilcoxonResult
    block_size: int
    n_blocks: int
    alpha: float = 0.05
    significant: bool


# ============================================================
# CLI
# ============================================================


class RunReport(BaseModel):
    command: List[str]
    config: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    started_at: str
    elapsed_seconds: float
    result: Dict[str, Any] = Field(default_factory=dict)
