"""
Mini-batch training with Adam and early stopping on validation loss.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.evaluation.metrics import compute_metrics
from app.knowledge.kg_store import KnowledgeGraph
from app.knowledge.processor import StopwordList, facts_for_hypothesis
from app.model.network import (
    EncodedBatch,
    Model,
    Variant,
    encode_examples,
    forward_batch,
    init_model,
    loss,
    loss_and_grads,
)
from app.model.text_encoding import build_vocab
from app.state import EpochRecord, FactParagraph, LabeledDataset, ModelConfig, TrainConfig, TrainHistory

logger = logging.getLogger(__name__)


class TrainingDivergedError(FloatingPointError):
    def __init__(self, epoch: int, batch_index: int, param_norms: Dict[str, float]):
        self.epoch = epoch
        self.batch_index = batch_index
        self.param_norms = param_norms
        norms = ", ".join(f"{k}={v:.3g}" for k, v in param_norms.items())
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch_index} (parameter norms: {norms})")


class Adam:
    """Adam with bias-corrected moments; updates parameter arrays in place."""

    def __init__(self, params: Dict[str, np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = grads[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / c1
            v_hat = self.v[name] / c2
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class EarlyStopping:
    """
    Tracks the monitored value per epoch. An epoch improves only when the
    value is strictly lower than the best so far; on a non-improving epoch
    training stops once epoch - best_epoch >= patience.
    """

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = 0
        self.epoch = 0
        self.should_stop = False

    def update(self, value: float) -> bool:
        self.epoch += 1
        if value < self.best:
            self.best = value
            self.best_epoch = self.epoch
            return True
        if self.epoch - self.best_epoch >= self.patience:
            self.should_stop = True
        return False


def precompute_facts(
    dataset: LabeledDataset,
    kg: KnowledgeGraph,
    stopwords: StopwordList,
    max_workers: int = 1,
) -> List[FactParagraph]:
    """One fact paragraph per example, in dataset order."""
    hypotheses = [e.hypothesis for e in dataset.examples]
    if max_workers <= 1:
        return [facts_for_hypothesis(h, kg, stopwords) for h in hypotheses]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda h: facts_for_hypothesis(h, kg, stopwords), hypotheses))


def build_model(
    variant: Variant,
    train_set: LabeledDataset,
    facts: Optional[List[FactParagraph]],
    model_cfg: Optional[ModelConfig] = None,
    seed: int = 0,
    min_freq: int = 1,
) -> Model:
    model_cfg = model_cfg or ModelConfig()
    corpus = [e.premise for e in train_set.examples] + [e.hypothesis for e in train_set.examples]
    if facts:
        corpus += [f.text for f in facts]
    vocab = build_vocab(corpus, min_freq=min_freq)
    logger.info(f"🔤 Vocabulary built: {len(vocab)} tokens (min_freq={min_freq})")
    return init_model(variant, vocab, model_cfg, np.random.default_rng(seed))


def _encode(model: Model, dataset: LabeledDataset, facts: Optional[List[FactParagraph]]) -> EncodedBatch:
    return encode_examples(
        model,
        [e.premise for e in dataset.examples],
        [e.hypothesis for e in dataset.examples],
        [f.text for f in facts] if facts is not None else None,
    )


def train(
    model: Model,
    train_set: LabeledDataset,
    val_set: LabeledDataset,
    kg: KnowledgeGraph,
    stopwords: StopwordList,
    cfg: Optional[TrainConfig] = None,
    train_facts: Optional[List[FactParagraph]] = None,
) -> Tuple[Model, TrainHistory]:
    """
    Trains a copy of `model` and returns the parameters snapshotted at the
    epoch with the lowest validation loss, plus the per-epoch history.

    `train_facts` reuses fact paragraphs already computed for `train_set`
    (e.g. by `build_model`); otherwise they are retrieved here.
    """
    cfg = cfg or TrainConfig()
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("training and validation sets must be non-empty")
    if train_facts is not None and len(train_facts) != len(train_set):
        raise ValueError(f"got {len(train_facts)} fact paragraphs for {len(train_set)} training examples")

    logger.info("=" * 60)
    logger.info(f"🏋️ TRAINING {model.variant.upper()} MODEL")
    logger.info(f"   Train/val examples: {len(train_set)}/{len(val_set)}")
    logger.info(
        f"   lr={cfg.learning_rate} batch_size={cfg.batch_size} "
        f"max_epochs={cfg.max_epochs} patience={cfg.patience} seed={cfg.seed}"
    )

    model = model.copy()
    val_facts = None
    if not model.uses_facts:
        train_facts = None
    else:
        if train_facts is None:
            train_facts = precompute_facts(train_set, kg, stopwords, cfg.fact_workers)
        val_facts = precompute_facts(val_set, kg, stopwords, cfg.fact_workers)
        empty = sum(f.is_empty for f in train_facts)
        logger.info(f"   Fact paragraphs cached ({empty}/{len(train_facts)} empty in train)")

    train_batch = _encode(model, train_set, train_facts)
    val_batch = _encode(model, val_set, val_facts)
    train_labels = np.asarray(train_set.labels(), dtype=np.int64)
    val_labels = np.asarray(val_set.labels(), dtype=np.int64)

    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    optimizer = Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    stopper = EarlyStopping(cfg.patience)
    history = TrainHistory()
    best = model.copy()
    n = len(train_set)

    for epoch in range(1, cfg.max_epochs + 1):
        started = time.perf_counter()
        order = rng.permutation(n)
        total = 0.0
        for batch_index, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            batch_loss, grads = loss_and_grads(model, train_batch.take(idx), train_labels[idx])
            if not math.isfinite(batch_loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                norms = {k: float(np.linalg.norm(v)) for k, v in params.items()}
                logger.error(f"❌ Non-finite loss at epoch {epoch}, batch {batch_index}")
                raise TrainingDivergedError(epoch, batch_index, norms)
            optimizer.step(params, grads)
            total += batch_loss * len(idx)

        train_probs = forward_batch(model, train_batch).probs
        val_probs = forward_batch(model, val_batch).probs
        val_loss = loss(val_probs, val_labels)
        record = EpochRecord(
            epoch=epoch,
            train_loss=total / n,
            train_accuracy=float(np.mean(np.argmax(train_probs, axis=1) == train_labels)),
            val_loss=val_loss,
            val_metrics=compute_metrics(val_labels, np.argmax(val_probs, axis=1)),
            seconds=time.perf_counter() - started,
        )
        history.epochs.append(record)

        improved = stopper.update(val_loss)
        if improved:
            best = model.copy()
        logger.info(
            f"   Epoch {epoch:3d} | train_loss={record.train_loss:.4f} train_acc={record.train_accuracy:.4f} "
            f"| val_loss={val_loss:.4f} val_acc={record.val_metrics.accuracy:.4f}{' *' if improved else ''}"
        )
        if stopper.should_stop:
            history.stopped_early = True
            logger.info(f"⏹️ Early stopping after epoch {epoch} (no improvement for {epoch - stopper.best_epoch} epochs)")
            break

    history.best_epoch = stopper.best_epoch
    logger.info(f"✅ Training complete. Best epoch: {history.best_epoch} (val_loss={stopper.best:.4f})")
    logger.info("=" * 60)
    return best, history
