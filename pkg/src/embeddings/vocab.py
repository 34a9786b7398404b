from collections import Counter
from typing import Dict, Iterable, List, Sequence

import numpy as np

from src.dataset.tokenize import tokenize

NEGATIVE_POWER = 0.75


class Vocab:
    """Token index with counts and the negative-sampling distribution"""

    def __init__(self, counts: Dict[str, int], min_count: int = 1):
        kept = [(token, count) for token, count in counts.items() if count >= min_count]
        kept.sort(key=lambda item: (-item[1], item[0]))

        self.min_count = min_count
        self.tokens: List[str] = [token for token, _ in kept]
        self.counts = np.array([count for _, count in kept], dtype=np.int64)
        self.index: Dict[str, int] = {token: i for i, token in enumerate(self.tokens)}

        weights = self.counts.astype(np.float64) ** NEGATIVE_POWER
        self.negative_cdf = np.cumsum(weights) / weights.sum() if len(weights) else weights

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def count(self, token: str) -> int:
        return int(self.counts[self.index[token]])

    def encode(self, tokens: Sequence[str]) -> np.ndarray:
        """Indices of in-vocabulary tokens; unknown tokens are dropped"""
        return np.array([self.index[t] for t in tokens if t in self.index], dtype=np.int64)

    def sample_negatives(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw indices with probability proportional to count^0.75"""
        draws = np.searchsorted(self.negative_cdf, rng.random(size), side="right")
        return np.minimum(draws, len(self.tokens) - 1)


def iter_sentences(lines: Iterable[str | Sequence[str]]) -> Iterable[List[str]]:
    """Tokenize raw lines; pre-tokenized sequences pass through"""
    for line in lines:
        yield tokenize(line) if isinstance(line, str) else list(line)


def build_vocab(lines: Iterable[str | Sequence[str]], min_count: int = 1) -> Vocab:
    """
    Count tokens and keep those seen at least min_count times

    Args:
        lines: Raw text lines or token lists
        min_count: Frequency threshold

    Returns:
        Vocab: Indices sorted by decreasing count, ties by token
    """
    counts = Counter()
    for tokens in iter_sentences(lines):
        counts.update(tokens)
    return Vocab(dict(counts), min_count=min_count)
