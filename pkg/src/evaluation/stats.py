import math
from collections import Counter
from typing import Dict, Iterable, List, Optional, Sequence, Set

import numpy as np
from pydantic import BaseModel

from src.dataset.models import Corpus
from src.dataset.tokenize import tokenize

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"


class MentionStats(BaseModel):
    count: int
    vocab_size: int
    median_length: float
    min_length: int
    max_length: int
    reference_overlap: Optional[float] = None


class CorpusStats(BaseModel):
    """Vocabulary, OOV, mention and perplexity figures of a corpus"""

    n_utterances: int
    n_tokens: int
    vocab_size: int
    reference_vocab_size: Optional[int] = None
    oov_types: Optional[int] = None
    oov_tokens: Optional[int] = None
    overlap: Optional[float] = None
    mentions: Dict[str, MentionStats]
    perplexity: Optional[float] = None


def vocab_overlap(vocab: Set[str], reference: Set[str]) -> float:
    """Share of `vocab` also found in `reference` (0 for an empty vocab)"""
    return len(vocab & reference) / len(vocab) if vocab else 0.0


def mention_lengths(mentions: Iterable[str | Sequence[str]]) -> List[int]:
    return [len(tokenize(m)) if isinstance(m, str) else len(m) for m in mentions]


def _mention_stats(texts: List[str], lengths: List[int], reference: Optional[Set[str]]) -> MentionStats:
    distinct = set(texts)
    return MentionStats(
        count=len(texts),
        vocab_size=len(distinct),
        median_length=float(np.median(lengths)),
        min_length=min(lengths),
        max_length=max(lengths),
        reference_overlap=vocab_overlap(distinct, reference) if reference is not None else None,
    )


def corpus_mentions(corpus: Corpus) -> Dict[str, List[List[str]]]:
    """Gold span token lists per slot kind"""
    found: Dict[str, List[List[str]]] = {}
    for utterance in corpus.utterances:
        for span in utterance.spans():
            found.setdefault(span.kind, []).append(utterance.tokens[span.start:span.end])
    return found


class BigramModel:
    """Add-k bigram language model with sentence markers and a single unknown class"""

    def __init__(self, sentences: Iterable[Sequence[str]], k: float = 1.0):
        self.k = k
        self.vocab: Set[str] = set()
        self.bigrams: Counter = Counter()
        self.histories: Counter = Counter()
        for tokens in sentences:
            self.vocab.update(tokens)
            padded = [BOS, *tokens, EOS]
            for prev, word in zip(padded, padded[1:]):
                self.bigrams[(prev, word)] += 1
                self.histories[prev] += 1
        # Every predictable outcome: the words, the end marker and the unknown class.
        self.outcomes = len(self.vocab) + 2

    def _map(self, token: str) -> str:
        return token if token in self.vocab else UNK

    def log_prob(self, prev: str, word: str) -> float:
        return math.log((self.bigrams[(prev, word)] + self.k) / (self.histories[prev] + self.k * self.outcomes))

    def perplexity(self, sentences: Iterable[Sequence[str]]) -> float:
        """exp of the mean negative log-probability over every predicted token, end markers included"""
        total, count = 0.0, 0
        for tokens in sentences:
            padded = [BOS, *(self._map(t) for t in tokens), EOS]
            for prev, word in zip(padded, padded[1:]):
                total += self.log_prob(prev, word)
                count += 1
        return math.exp(-total / count) if count else float("nan")


def corpus_stats(
    corpus: Corpus,
    reference_vocab: Optional[Set[str]] = None,
    reference_corpus: Optional[Corpus] = None,
) -> CorpusStats:
    """
    Describe a corpus, optionally against a reference (training) corpus

    Args:
        corpus: Corpus to describe
        reference_vocab: Reference token vocabulary; taken from reference_corpus if omitted
        reference_corpus: Reference utterances for mention overlap and perplexity

    Returns:
        CorpusStats: The figures
    """
    tokens = [t for u in corpus.utterances for t in u.tokens]
    vocab = set(tokens)
    if reference_vocab is None and reference_corpus is not None:
        reference_vocab = {t for u in reference_corpus.utterances for t in u.tokens}

    reference_mentions: Dict[str, Set[str]] = {}
    if reference_corpus is not None:
        reference_mentions = {
            kind: {" ".join(m) for m in spans} for kind, spans in corpus_mentions(reference_corpus).items()
        }

    mentions = {}
    for kind, spans in sorted(corpus_mentions(corpus).items()):
        reference = reference_mentions.get(kind, set()) if reference_corpus is not None else None
        mentions[kind] = _mention_stats([" ".join(s) for s in spans], [len(s) for s in spans], reference)

    stats = CorpusStats(
        n_utterances=len(corpus),
        n_tokens=len(tokens),
        vocab_size=len(vocab),
        mentions=mentions,
    )
    if reference_vocab is not None:
        stats.reference_vocab_size = len(reference_vocab)
        stats.oov_types = len(vocab - reference_vocab)
        stats.oov_tokens = sum(1 for t in tokens if t not in reference_vocab)
        stats.overlap = vocab_overlap(vocab, reference_vocab)
    if reference_corpus is not None and len(corpus):
        lm = BigramModel(u.tokens for u in reference_corpus.utterances)
        stats.perplexity = lm.perplexity(u.tokens for u in corpus.utterances)
    return stats
