"""
Fusion classifier: NLI encoder + fact encoder -> concat -> MLP -> softmax.

    h_nli  = enc_nli(premise [SEP] hypothesis)
    h_fact = enc_fact(fact paragraph)                (proposed only)
    z      = [h_nli ; h_fact]  or  h_nli             (baseline)
    probs  = softmax(W2 . relu(W1 . z + b1) + b2)

Gradients are derived by hand; `loss_and_grads` is the single source of
truth for training and for the finite-difference checks.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from app.knowledge.kg_store import KnowledgeGraph
from app.knowledge.processor import StopwordList, facts_for_hypothesis
from app.model.text_encoding import (
    EncoderCache,
    EncoderParams,
    Vocabulary,
    encode_backward,
    encode_batch,
    encode_pair,
    encode_text,
)
from app.state import NUM_LABELS, FactParagraph, Label, ModelConfig

Variant = Literal["proposed", "baseline"]

PROB_FLOOR = 1e-12


@dataclass
class ClassifierParams:
    W1: np.ndarray  # d_h x d_in
    b1: np.ndarray  # d_h
    W2: np.ndarray  # 3 x d_h
    b2: np.ndarray  # 3

    def tensors(self) -> Dict[str, np.ndarray]:
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def copy(self) -> "ClassifierParams":
        return ClassifierParams(W1=self.W1.copy(), b1=self.b1.copy(), W2=self.W2.copy(), b2=self.b2.copy())


@dataclass
class Model:
    variant: Variant
    vocab: Vocabulary
    nli_encoder: EncoderParams
    classifier: ClassifierParams
    config: ModelConfig = field(default_factory=ModelConfig)
    fact_encoder: Optional[EncoderParams] = None

    def __post_init__(self):
        self.validate()

    @property
    def uses_facts(self) -> bool:
        return self.variant == "proposed"

    def validate(self) -> None:
        d_h = self.config.d_h
        expected_in = 2 * d_h if self.uses_facts else d_h
        if self.variant not in ("proposed", "baseline"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.uses_facts and self.fact_encoder is None:
            raise ValueError("proposed model requires a fact encoder")
        if not self.uses_facts and self.fact_encoder is not None:
            raise ValueError("baseline model must not carry a fact encoder")
        encoders = [self.nli_encoder] + ([self.fact_encoder] if self.fact_encoder is not None else [])
        for enc in encoders:
            if enc.E.shape != (len(self.vocab), self.config.d_e) or enc.W.shape != (d_h, self.config.d_e):
                raise ValueError("encoder shape does not match vocabulary/config")
            if enc.b.shape != (d_h,):
                raise ValueError("encoder bias shape does not match config")
        c = self.classifier
        if c.W1.shape != (d_h, expected_in) or c.b1.shape != (d_h,):
            raise ValueError(f"classifier W1 must be {d_h}x{expected_in} for variant {self.variant}")
        if c.W2.shape != (NUM_LABELS, d_h) or c.b2.shape != (NUM_LABELS,):
            raise ValueError("classifier output layer must map d_h -> 3 labels")

    def parameters(self) -> Dict[str, np.ndarray]:
        """Flat name -> tensor view used by the optimizer and checkpoints."""
        params = {f"nli.{k}": v for k, v in self.nli_encoder.tensors().items()}
        if self.fact_encoder is not None:
            params.update({f"fact.{k}": v for k, v in self.fact_encoder.tensors().items()})
        params.update({f"clf.{k}": v for k, v in self.classifier.tensors().items()})
        return params

    def copy(self) -> "Model":
        return Model(
            variant=self.variant,
            vocab=self.vocab,
            nli_encoder=self.nli_encoder.copy(),
            classifier=self.classifier.copy(),
            config=self.config.model_copy(),
            fact_encoder=self.fact_encoder.copy() if self.fact_encoder is not None else None,
        )


def init_model(variant: Variant, vocab: Vocabulary, cfg: ModelConfig, rng: np.random.Generator) -> Model:
    s = cfg.init_scale
    d_in = 2 * cfg.d_h if variant == "proposed" else cfg.d_h
    nli = EncoderParams.init(len(vocab), cfg.d_e, cfg.d_h, rng, s)
    fact = EncoderParams.init(len(vocab), cfg.d_e, cfg.d_h, rng, s) if variant == "proposed" else None
    clf = ClassifierParams(
        W1=rng.uniform(-s, s, size=(cfg.d_h, d_in)),
        b1=rng.uniform(-s, s, size=cfg.d_h),
        W2=rng.uniform(-s, s, size=(NUM_LABELS, cfg.d_h)),
        b2=rng.uniform(-s, s, size=NUM_LABELS),
    )
    return Model(variant=variant, vocab=vocab, nli_encoder=nli, classifier=clf, config=cfg, fact_encoder=fact)


def zero_model(variant: Variant, vocab: Vocabulary, cfg: ModelConfig) -> Model:
    d_in = 2 * cfg.d_h if variant == "proposed" else cfg.d_h
    clf = ClassifierParams(
        W1=np.zeros((cfg.d_h, d_in)),
        b1=np.zeros(cfg.d_h),
        W2=np.zeros((NUM_LABELS, cfg.d_h)),
        b2=np.zeros(NUM_LABELS),
    )
    return Model(
        variant=variant,
        vocab=vocab,
        nli_encoder=EncoderParams.zeros(len(vocab), cfg.d_e, cfg.d_h),
        classifier=clf,
        config=cfg,
        fact_encoder=EncoderParams.zeros(len(vocab), cfg.d_e, cfg.d_h) if variant == "proposed" else None,
    )


# ============================================================
# Batches
# ============================================================


@dataclass
class EncodedBatch:
    pair_ids: np.ndarray
    pair_lengths: np.ndarray
    fact_ids: Optional[np.ndarray] = None
    fact_lengths: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.pair_ids.shape[0]

    def take(self, index: np.ndarray) -> "EncodedBatch":
        return EncodedBatch(
            pair_ids=self.pair_ids[index],
            pair_lengths=self.pair_lengths[index],
            fact_ids=self.fact_ids[index] if self.fact_ids is not None else None,
            fact_lengths=self.fact_lengths[index] if self.fact_lengths is not None else None,
        )


def encode_examples(
    m: Model,
    premises: Sequence[str],
    hypotheses: Sequence[str],
    fact_texts: Optional[Sequence[str]] = None,
) -> EncodedBatch:
    pairs = [encode_pair(m.vocab, p, h, m.config.max_len_pair) for p, h in zip(premises, hypotheses)]
    batch = EncodedBatch(
        pair_ids=np.asarray([ids for ids, _ in pairs], dtype=np.int64).reshape(len(pairs), m.config.max_len_pair),
        pair_lengths=np.asarray([n for _, n in pairs], dtype=np.int64),
    )
    if m.uses_facts:
        if fact_texts is None:
            raise ValueError("proposed model needs fact paragraph texts")
        facts = [encode_text(m.vocab, t, m.config.max_len_fact) for t in fact_texts]
        batch.fact_ids = np.asarray([ids for ids, _ in facts], dtype=np.int64).reshape(len(facts), m.config.max_len_fact)
        batch.fact_lengths = np.asarray([n for _, n in facts], dtype=np.int64)
    return batch


# ============================================================
# Forward / loss / backward
# ============================================================


@dataclass
class ForwardCache:
    nli: EncoderCache
    fact: Optional[EncoderCache]
    z: np.ndarray
    a1: np.ndarray
    r: np.ndarray
    probs: np.ndarray


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward_batch(m: Model, batch: EncodedBatch) -> ForwardCache:
    nli = encode_batch(m.nli_encoder, batch.pair_ids, batch.pair_lengths)
    fact = None
    if m.uses_facts:
        if batch.fact_ids is None:
            raise ValueError("batch carries no fact encodings")
        fact = encode_batch(m.fact_encoder, batch.fact_ids, batch.fact_lengths)
        z = np.concatenate([nli.h, fact.h], axis=1)
    else:
        z = nli.h
    c = m.classifier
    if z.shape[1] != c.W1.shape[1]:
        raise ValueError(f"fused vector has size {z.shape[1]}, classifier expects {c.W1.shape[1]}")
    a1 = z @ c.W1.T + c.b1
    r = np.maximum(a1, 0.0)
    probs = softmax(r @ c.W2.T + c.b2)
    return ForwardCache(nli=nli, fact=fact, z=z, a1=a1, r=r, probs=probs)


def loss(probs: np.ndarray, gold) -> float:
    """Cross-entropy -ln p[gold]; 2-D input gives the batch mean."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim == 1:
        return float(-np.log(max(probs[int(gold)], PROB_FLOOR)))
    gold = np.asarray(gold, dtype=np.int64)
    picked = probs[np.arange(len(gold)), gold]
    return float(np.mean(-np.log(np.maximum(picked, PROB_FLOOR))))


def loss_and_grads(m: Model, batch: EncodedBatch, labels: Sequence[int]) -> Tuple[float, Dict[str, np.ndarray]]:
    labels = np.asarray(labels, dtype=np.int64)
    cache = forward_batch(m, batch)
    B = len(labels)
    batch_loss = loss(cache.probs, labels)

    c = m.classifier
    dlogits = cache.probs.copy()
    dlogits[np.arange(B), labels] -= 1.0
    dlogits /= B

    grads: Dict[str, np.ndarray] = {
        "clf.W2": dlogits.T @ cache.r,
        "clf.b2": dlogits.sum(axis=0),
    }
    da1 = (dlogits @ c.W2) * (cache.a1 > 0)
    grads["clf.W1"] = da1.T @ cache.z
    grads["clf.b1"] = da1.sum(axis=0)
    dz = da1 @ c.W1

    d_h = m.config.d_h
    for name, g in encode_backward(m.nli_encoder, cache.nli, dz[:, :d_h]).items():
        grads[f"nli.{name}"] = g
    if m.uses_facts:
        for name, g in encode_backward(m.fact_encoder, cache.fact, dz[:, d_h:]).items():
            grads[f"fact.{name}"] = g
    return batch_loss, grads


# ============================================================
# Inference
# ============================================================


def forward(m: Model, premise: str, hypothesis: str, fact_paragraph_text: str = "") -> np.ndarray:
    batch = encode_examples(m, [premise], [hypothesis], [fact_paragraph_text])
    return forward_batch(m, batch).probs[0]


def predict_batch(
    m: Model,
    premises: Sequence[str],
    hypotheses: Sequence[str],
    fact_texts: Sequence[str],
) -> Tuple[List[Label], np.ndarray]:
    if not premises:
        return [], np.zeros((0, NUM_LABELS))
    probs = forward_batch(m, encode_examples(m, premises, hypotheses, fact_texts)).probs
    # np.argmax returns the first maximum, i.e. the lowest label id on ties.
    return [Label(int(i)) for i in np.argmax(probs, axis=1)], probs


def predict(
    m: Model,
    premise: str,
    hypothesis: str,
    kg: KnowledgeGraph,
    stopwords: StopwordList,
) -> Tuple[Label, np.ndarray, FactParagraph]:
    # Retrieval is queried with the hypothesis (the claim), never the premise.
    # The baseline reads no facts, so it skips retrieval altogether.
    facts = facts_for_hypothesis(hypothesis, kg, stopwords) if m.uses_facts else FactParagraph()
    probs = forward(m, premise, hypothesis, facts.text)
    return Label(int(np.argmax(probs))), probs, facts
