from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from loguru import logger

from src.embeddings.skipgram import EmbeddingModel, word_vector

UNK = "<unk>"


class TokenIndex:
    """Token -> row of the embedding table; row 0 is the unknown token"""

    def __init__(self, tokens: Sequence[str]):
        self.tokens: List[str] = [UNK] + [t for t in tokens if t != UNK]
        self.ids: Dict[str, int] = {t: i for i, t in enumerate(self.tokens)}

    @classmethod
    def build(cls, sentences: Iterable[Sequence[str]]) -> "TokenIndex":
        seen: Dict[str, None] = {}
        for tokens in sentences:
            for token in tokens:
                seen.setdefault(token, None)
        return cls(sorted(seen))

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.ids.get(t, 0) for t in tokens], dtype=np.int64)


def init_embedding(
    rng: np.random.Generator,
    index: TokenIndex,
    dim: int,
    pretrained: Optional[EmbeddingModel] = None,
) -> np.ndarray:
    """
    Embedding table, copied from pretrained vectors where available

    Rows without a pretrained vector are drawn from N(0, 0.1^2).
    """
    table = rng.normal(0.0, 0.1, size=(len(index), dim))
    if pretrained is None:
        return table
    covered = 0
    for i, token in enumerate(index.tokens[1:], 1):
        vector, oov = word_vector(pretrained, token)
        if not oov or np.any(vector):
            table[i] = vector
            covered += 1
    logger.debug(f"Initialised {covered}/{len(index) - 1} embedding rows from pretrained vectors")
    return table


def lookup(
    table: np.ndarray,
    index: TokenIndex,
    batch: Sequence[Sequence[str]],
    pretrained: Optional[EmbeddingModel] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Embed a batch of equal-length token lists

    Unknown tokens take their pretrained (subword) vector when one is attached,
    otherwise the unknown row.

    Returns:
        tuple[np.ndarray, np.ndarray]: Inputs (B, T, dim) and token ids (B, T)
    """
    ids = np.stack([index.encode(tokens) for tokens in batch])
    x = table[ids]
    if pretrained is not None:
        for b, tokens in enumerate(batch):
            for t, token in enumerate(tokens):
                if ids[b, t] == 0:
                    vector, _ = word_vector(pretrained, token)
                    if np.any(vector):
                        x[b, t] = vector
    return x, ids
