"""
Vocabulary, id encoding and the mean-pool sequence encoder.

The encoder maps a padded id sequence to a d_h representation vector:

    h = tanh(W . meanpool(E[ids[:length]]) + b)

Mean pooling ignores token order, so permuting the first `length` ids does
not change h. Real pretrained encoders do not have this property.
"""

from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from app.knowledge.processor import tokenize

PAD, UNK, SEP = 0, 1, 2
RESERVED_TOKENS = ("[PAD]", "[UNK]", "[SEP]")


class Vocabulary:
    def __init__(self, tokens: Sequence[str]):
        """`tokens` lists every token in id order, reserved ones first."""
        if tuple(tokens[: len(RESERVED_TOKENS)]) != RESERVED_TOKENS:
            raise ValueError("vocabulary must start with the reserved tokens")
        self.id_to_token: List[str] = list(tokens)
        self.token_to_id: Dict[str, int] = {}
        for i, tok in enumerate(self.id_to_token):
            if tok in self.token_to_id:
                raise ValueError(f"duplicate vocabulary token {tok!r}")
            self.token_to_id[tok] = i

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token

    def lookup(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def ids(self, text: str) -> List[int]:
        return [self.lookup(t) for t in tokenize(text)]


def build_vocab(corpus: Sequence[str], min_freq: int = 1) -> Vocabulary:
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts: Counter = Counter()
    order: List[str] = []
    for text in corpus:
        for tok in tokenize(text):
            if tok not in counts:
                order.append(tok)
            counts[tok] += 1
    kept = [tok for tok in order if counts[tok] >= min_freq and tok not in RESERVED_TOKENS]
    return Vocabulary(list(RESERVED_TOKENS) + kept)


def _pad(ids: List[int], max_len: int) -> Tuple[List[int], int]:
    ids = ids[:max_len]
    length = len(ids)
    return ids + [PAD] * (max_len - length), length


def encode_text(v: Vocabulary, text: str, max_len: int) -> Tuple[List[int], int]:
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    return _pad(v.ids(text), max_len)


def encode_pair(v: Vocabulary, premise: str, hypothesis: str, max_len: int) -> Tuple[List[int], int]:
    if max_len < 3:
        raise ValueError("max_len must be >= 3 for a premise/hypothesis pair")
    return _pad(v.ids(premise) + [SEP] + v.ids(hypothesis), max_len)


# ============================================================
# Encoder parameters and batched forward/backward
# ============================================================


@dataclass
class EncoderParams:
    E: np.ndarray  # V x d_e
    W: np.ndarray  # d_h x d_e
    b: np.ndarray  # d_h

    @classmethod
    def init(cls, vocab_size: int, d_e: int, d_h: int, rng: np.random.Generator, scale: float) -> "EncoderParams":
        return cls(
            E=rng.uniform(-scale, scale, size=(vocab_size, d_e)),
            W=rng.uniform(-scale, scale, size=(d_h, d_e)),
            b=rng.uniform(-scale, scale, size=d_h),
        )

    @classmethod
    def zeros(cls, vocab_size: int, d_e: int, d_h: int) -> "EncoderParams":
        return cls(E=np.zeros((vocab_size, d_e)), W=np.zeros((d_h, d_e)), b=np.zeros(d_h))

    def tensors(self) -> Dict[str, np.ndarray]:
        return {"E": self.E, "W": self.W, "b": self.b}

    def copy(self) -> "EncoderParams":
        return EncoderParams(E=self.E.copy(), W=self.W.copy(), b=self.b.copy())


@dataclass
class EncoderCache:
    ids: np.ndarray
    mask: np.ndarray
    inv_len: np.ndarray
    pooled: np.ndarray
    h: np.ndarray


def encode_batch(p: EncoderParams, ids: np.ndarray, lengths: np.ndarray) -> EncoderCache:
    """ids: B x L ints, lengths: B. Returns the cache; `.h` is B x d_h."""
    ids = np.asarray(ids, dtype=np.int64)
    lengths = np.asarray(lengths, dtype=np.int64)
    if ids.ndim != 2 or lengths.shape != (ids.shape[0],):
        raise ValueError(f"inconsistent shapes: ids {ids.shape}, lengths {lengths.shape}")
    if np.any(lengths > ids.shape[1]) or np.any(lengths < 0):
        raise ValueError("length must be within [0, len(ids)]")
    if ids.size and (ids.min() < 0 or ids.max() >= p.E.shape[0]):
        raise ValueError(f"token id out of range for vocabulary of size {p.E.shape[0]}")
    if p.W.shape[1] != p.E.shape[1] or p.b.shape != (p.W.shape[0],):
        raise ValueError("encoder parameter shapes are inconsistent")

    positions = np.arange(ids.shape[1])[None, :]
    mask = (positions < lengths[:, None]) & (ids != PAD)
    # Empty sequence pools to the zero vector, so h = tanh(b).
    inv_len = np.where(lengths > 0, 1.0 / np.maximum(lengths, 1), 0.0)
    pooled = (p.E[ids] * mask[..., None]).sum(axis=1) * inv_len[:, None]
    h = np.tanh(pooled @ p.W.T + p.b)
    return EncoderCache(ids=ids, mask=mask, inv_len=inv_len, pooled=pooled, h=h)


def encode_backward(p: EncoderParams, cache: EncoderCache, dh: np.ndarray) -> Dict[str, np.ndarray]:
    dpre = dh * (1.0 - cache.h**2)
    grads = {
        "W": dpre.T @ cache.pooled,
        "b": dpre.sum(axis=0),
    }
    dpooled = (dpre @ p.W) * cache.inv_len[:, None]
    dE = np.zeros_like(p.E)
    rows, cols = np.nonzero(cache.mask)
    np.add.at(dE, cache.ids[rows, cols], dpooled[rows])
    grads["E"] = dE
    return grads


def encode_sequence(p: EncoderParams, ids: Sequence[int], length: int) -> np.ndarray:
    return encode_batch(p, np.asarray([ids]), np.asarray([length])).h[0]
