"""
Checkpoint format: one JSON document holding format version, variant,
model config, vocabulary (tokens in id order) and every weight tensor as a
flat list of doubles plus its shape. Floats are written with repr
precision, so loading reproduces the weights bit for bit.
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Literal, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from app.model.network import ClassifierParams, Model
from app.model.text_encoding import EncoderParams, Vocabulary
from app.state import ModelConfig

logger = logging.getLogger(__name__)

FORMAT_NAME = "kg-nli-checkpoint"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class TensorRecord(BaseModel):
    shape: List[int]
    data: List[float]


class CheckpointDocument(BaseModel):
    format: Literal["kg-nli-checkpoint"] = FORMAT_NAME
    format_version: int = FORMAT_VERSION
    variant: Literal["proposed", "baseline"]
    config: ModelConfig
    vocab: List[str]
    tensors: Dict[str, TensorRecord]


def save_checkpoint(model: Model, path: Union[str, Path]) -> None:
    doc = CheckpointDocument(
        variant=model.variant,
        config=model.config,
        vocab=model.vocab.id_to_token,
        tensors={
            name: TensorRecord(shape=list(t.shape), data=t.ravel().tolist())
            for name, t in model.parameters().items()
        },
    )
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc.model_dump(), f, ensure_ascii=False)
    logger.info(f"💾 Saved {model.variant} checkpoint to {path}")


def _tensor(doc: CheckpointDocument, name: str) -> np.ndarray:
    record = doc.tensors.get(name)
    if record is None:
        raise CheckpointError(f"checkpoint is missing tensor {name!r}")
    data = np.asarray(record.data, dtype=np.float64)
    if data.size != int(np.prod(record.shape)):
        raise CheckpointError(f"tensor {name!r} has {data.size} values for shape {record.shape}")
    return data.reshape(record.shape)


def _encoder(doc: CheckpointDocument, prefix: str) -> EncoderParams:
    return EncoderParams(E=_tensor(doc, f"{prefix}.E"), W=_tensor(doc, f"{prefix}.W"), b=_tensor(doc, f"{prefix}.b"))


def load_checkpoint(path: Union[str, Path]) -> Model:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CheckpointError(f"corrupted checkpoint {path}: {e}") from None

    if not isinstance(raw, dict) or raw.get("format") != FORMAT_NAME:
        raise CheckpointError(f"{path} is not a {FORMAT_NAME} document")
    if raw.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {raw.get('format_version')!r} is not supported (expected {FORMAT_VERSION})"
        )
    try:
        doc = CheckpointDocument.model_validate(raw)
    except ValidationError as e:
        raise CheckpointError(f"invalid checkpoint {path}: {e}") from None

    try:
        model = Model(
            variant=doc.variant,
            vocab=Vocabulary(doc.vocab),
            nli_encoder=_encoder(doc, "nli"),
            classifier=ClassifierParams(
                W1=_tensor(doc, "clf.W1"),
                b1=_tensor(doc, "clf.b1"),
                W2=_tensor(doc, "clf.W2"),
                b2=_tensor(doc, "clf.b2"),
            ),
            config=doc.config,
            fact_encoder=_encoder(doc, "fact") if doc.variant == "proposed" else None,
        )
    except CheckpointError:
        raise
    except ValueError as e:
        raise CheckpointError(f"inconsistent checkpoint {path}: {e}") from None

    logger.info(f"📂 Loaded {model.variant} checkpoint from {path} (vocab={len(model.vocab)})")
    return model
