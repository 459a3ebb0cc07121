from typing import Sequence

import numpy as np
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support

from app.state import NUM_LABELS, Metrics

LABEL_IDS = list(range(NUM_LABELS))


def compute_metrics(gold: Sequence[int], pred: Sequence[int]) -> Metrics:
    """
    Macro-averaged precision/recall/F1 over all three classes. A class whose
    denominator is zero scores 0 (absent classes still count in the mean).
    """
    gold = np.asarray(gold, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if gold.shape != pred.shape:
        raise ValueError("gold and predicted label vectors differ in length")
    if gold.size == 0:
        raise ValueError("cannot compute metrics on an empty dataset")

    cm = confusion_matrix(gold, pred, labels=LABEL_IDS)
    precision, recall, f1, support = precision_recall_fscore_support(
        gold, pred, labels=LABEL_IDS, average=None, zero_division=0
    )
    return Metrics(
        confusion=cm.tolist(),
        precision=float(np.mean(precision)),
        recall=float(np.mean(recall)),
        f1=float(np.mean(f1)),
        accuracy=float(np.trace(cm) / cm.sum()),
        per_class_true=np.diag(cm).tolist(),
        per_class_precision=precision.tolist(),
        per_class_recall=recall.tolist(),
        per_class_f1=f1.tolist(),
        support=support.tolist(),
    )
