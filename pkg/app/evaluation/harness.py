"""
Dataset-level evaluation: metrics, baseline-vs-proposed comparison with a
paired Wilcoxon test over per-block accuracies, and error analysis.
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from app.evaluation.metrics import compute_metrics
from app.evaluation.wilcoxon import wilcoxon_signed_rank
from app.knowledge.kg_store import KnowledgeGraph
from app.knowledge.processor import StopwordList, facts_for_hypothesis
from app.model.network import Model, predict_batch
from app.state import (
    ComparisonReport,
    EvaluationReport,
    FactParagraph,
    LabeledDataset,
    Metrics,
    MisclassifiedExample,
    WilcoxonResult,
)

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_SIZE = 16
ALPHA = 0.05


@dataclass
class Predictions:
    labels: np.ndarray  # predicted ids
    probs: np.ndarray
    facts: List[FactParagraph]


def run_predictions(model: Model, dataset: LabeledDataset, kg: KnowledgeGraph, stopwords: StopwordList) -> Predictions:
    """Same semantics as calling predict per example, vectorized."""
    examples = dataset.examples
    if model.uses_facts:
        facts = [facts_for_hypothesis(e.hypothesis, kg, stopwords) for e in examples]
    else:
        facts = [FactParagraph() for _ in examples]
    labels, probs = predict_batch(
        model,
        [e.premise for e in examples],
        [e.hypothesis for e in examples],
        [f.text for f in facts],
    )
    return Predictions(labels=np.asarray([int(l) for l in labels], dtype=np.int64), probs=probs, facts=facts)


def evaluate_report(model: Model, dataset: LabeledDataset, kg: KnowledgeGraph, stopwords: StopwordList) -> EvaluationReport:
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    preds = run_predictions(model, dataset, kg, stopwords)
    metrics = compute_metrics(dataset.labels(), preds.labels)
    empty = sum(f.is_empty for f in preds.facts) if model.uses_facts else 0
    logger.info(
        f"📊 {model.variant}: acc={metrics.accuracy:.4f} P={metrics.precision:.4f} "
        f"R={metrics.recall:.4f} F1={metrics.f1:.4f} (n={len(dataset)}, empty facts={empty})"
    )
    return EvaluationReport(metrics=metrics, size=len(dataset), empty_fact_paragraphs=empty)


def evaluate(model: Model, dataset: LabeledDataset, kg: KnowledgeGraph, stopwords: StopwordList) -> Metrics:
    return evaluate_report(model, dataset, kg, stopwords).metrics


def block_accuracies(gold: np.ndarray, pred: np.ndarray, block_size: int) -> List[float]:
    """Accuracy per consecutive block; the last short block is kept."""
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    correct = (np.asarray(gold) == np.asarray(pred)).astype(np.float64)
    return [float(correct[i : i + block_size].mean()) for i in range(0, len(correct), block_size)]


def compare_report(
    baseline: Model,
    proposed: Model,
    test_set: LabeledDataset,
    kg: KnowledgeGraph,
    stopwords: StopwordList,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> ComparisonReport:
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    if len(test_set) == 0:
        raise ValueError("cannot compare on an empty test set")
    if baseline.variant != "baseline" or proposed.variant != "proposed":
        logger.warning(
            f"⚠️ Comparing variants {baseline.variant!r} (as baseline) and {proposed.variant!r} (as proposed)"
        )

    gold = np.asarray(test_set.labels(), dtype=np.int64)
    base_pred = run_predictions(baseline, test_set, kg, stopwords).labels
    prop_pred = run_predictions(proposed, test_set, kg, stopwords).labels

    base_blocks = block_accuracies(gold, base_pred, block_size)
    prop_blocks = block_accuracies(gold, prop_pred, block_size)
    # Pairs are (proposed, baseline): W+ collects blocks where proposed wins.
    result = wilcoxon_signed_rank(list(zip(prop_blocks, base_blocks)))

    report = ComparisonReport(
        baseline=compute_metrics(gold, base_pred),
        proposed=compute_metrics(gold, prop_pred),
        wilcoxon=result,
        block_size=block_size,
        n_blocks=len(prop_blocks),
        alpha=ALPHA,
        significant=result.p_value < ALPHA,
    )
    logger.info(
        f"⚖️ Comparison over {report.n_blocks} blocks of {block_size}: "
        f"baseline acc={report.baseline.accuracy:.4f}, proposed acc={report.proposed.accuracy:.4f}, "
        f"W={result.statistic} p={result.p_value:.6g} ({'significant' if report.significant else 'not significant'})"
    )
    return report


def compare_models(
    baseline: Model,
    proposed: Model,
    test_set: LabeledDataset,
    kg: KnowledgeGraph,
    stopwords: StopwordList,
    block_size: int = DEFAULT_BLOCK_SIZE,
) -> Tuple[Metrics, Metrics, WilcoxonResult]:
    report = compare_report(baseline, proposed, test_set, kg, stopwords, block_size)
    return report.baseline, report.proposed, report.wilcoxon


def error_analysis(
    model: Model,
    dataset: LabeledDataset,
    kg: KnowledgeGraph,
    stopwords: StopwordList,
    limit: int = 20,
) -> List[MisclassifiedExample]:
    preds = run_predictions(model, dataset, kg, stopwords)
    wrong: List[MisclassifiedExample] = []
    for i, example in enumerate(dataset.examples):
        if preds.labels[i] == int(example.label):
            continue
        wrong.append(
            MisclassifiedExample(
                premise=example.premise,
                hypothesis=example.hypothesis,
                fact_paragraph=preds.facts[i].text,
                gold=example.label,
                predicted=int(preds.labels[i]),
                probabilities=preds.probs[i].tolist(),
            )
        )
        if len(wrong) >= limit:
            break
    return wrong
