from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.embeddings.subword import SubwordConfig, char_ngrams, hash_ngram
from src.embeddings.vocab import Vocab, build_vocab, iter_sentences
from src.utils.errors import DataError

MIN_LR_FRACTION = 1e-4


@dataclass
class EmbeddingModel:
    """
    Skip-gram embeddings with optional hashed character n-gram vectors

    Only buckets reached by vocabulary n-grams get a row in `subword_input`;
    `bucket_rows` maps a bucket index to its row.
    """

    dim: int
    vocab: Vocab
    subword: SubwordConfig
    word_input: np.ndarray
    subword_input: np.ndarray
    bucket_rows: Dict[int, int]
    word_ngram_rows: List[np.ndarray]
    output: Optional[np.ndarray] = None
    # True when word_input already holds composed vectors (models read from a vector file)
    composed: bool = False
    epoch_losses: List[float] = field(default_factory=list)

    @property
    def uses_subwords(self) -> bool:
        return self.subword.enabled and not self.composed and len(self.subword_input) > 0

    @classmethod
    def from_vectors(
        cls,
        tokens: Sequence[str],
        vectors: np.ndarray,
        subword: Optional[SubwordConfig] = None,
        subword_input: Optional[np.ndarray] = None,
        bucket_rows: Optional[Dict[int, int]] = None,
    ) -> "EmbeddingModel":
        """Wrap precomputed word vectors (and optionally a subword table)"""
        vectors = np.asarray(vectors, dtype=np.float64)
        dim = vectors.shape[1]
        vocab = Vocab({token: 1 for token in tokens})
        # Vocab sorts ties by token; keep the file order instead.
        vocab.tokens = list(tokens)
        vocab.index = {token: i for i, token in enumerate(tokens)}
        return cls(
            dim=dim,
            vocab=vocab,
            subword=subword or SubwordConfig(enabled=subword_input is not None),
            word_input=vectors,
            subword_input=subword_input if subword_input is not None else np.zeros((0, dim)),
            bucket_rows=bucket_rows or {},
            word_ngram_rows=[np.zeros(0, dtype=np.int64) for _ in tokens],
            composed=True,
        )


class WordVector(NamedTuple):
    vector: np.ndarray
    oov: bool


class SkipGramGrad(NamedTuple):
    """Sparse gradient of the negative-sampling loss for one center word"""

    word_index: int
    word_grad: np.ndarray
    subword_rows: np.ndarray
    subword_grad: np.ndarray
    output_rows: np.ndarray
    output_grad: np.ndarray


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -x))


def _assign_subword_rows(vocab: Vocab, cfg: SubwordConfig) -> Tuple[Dict[int, int], List[np.ndarray]]:
    bucket_rows: Dict[int, int] = {}
    word_rows: List[np.ndarray] = []
    for token in vocab.tokens:
        rows = []
        if cfg.enabled:
            for ngram in char_ngrams(token, cfg):
                bucket = hash_ngram(ngram, cfg.bucket_count)
                rows.append(bucket_rows.setdefault(bucket, len(bucket_rows)))
        word_rows.append(np.array(rows, dtype=np.int64))
    return bucket_rows, word_rows


def init_model(vocab: Vocab, dim: int, cfg: SubwordConfig, rng: np.random.Generator) -> EmbeddingModel:
    if len(vocab) == 0:
        raise DataError("Cannot train embeddings: vocabulary is empty")
    bucket_rows, word_rows = _assign_subword_rows(vocab, cfg)
    bound = 1.0 / dim
    return EmbeddingModel(
        dim=dim,
        vocab=vocab,
        subword=cfg,
        word_input=rng.uniform(-bound, bound, size=(len(vocab), dim)),
        subword_input=rng.uniform(-bound, bound, size=(len(bucket_rows), dim)),
        bucket_rows=bucket_rows,
        word_ngram_rows=word_rows,
        output=np.zeros((len(vocab), dim)),
    )


def center_vector(model: EmbeddingModel, index: int) -> np.ndarray:
    """Word vector, averaged with its n-gram vectors when subwords are used"""
    if not model.uses_subwords:
        return model.word_input[index].copy()
    rows = model.word_ngram_rows[index]
    return (model.word_input[index] + model.subword_input[rows].sum(axis=0)) / (1 + len(rows))


def skipgram_loss_and_grad(
    model: EmbeddingModel, center: int, contexts: np.ndarray, negatives: np.ndarray
) -> Tuple[float, SkipGramGrad]:
    """
    Negative-sampling loss of one center word against its contexts

    For each context c with negatives n_1..n_k:
        -log sigmoid(u_c . v) - sum_j log sigmoid(-u_nj . v)
    Negatives equal to their context are ignored.

    Args:
        model: Model holding input and output vectors
        center: Vocabulary index of the center word
        contexts: Context indices, shape (C,)
        negatives: Negative indices, shape (C, k)

    Returns:
        Tuple[float, SkipGramGrad]: Summed loss and its sparse gradient
    """
    contexts = np.asarray(contexts, dtype=np.int64)
    negatives = np.asarray(negatives, dtype=np.int64).reshape(len(contexts), -1)

    targets = np.concatenate([contexts[:, None], negatives], axis=1)
    labels = np.zeros(targets.shape)
    labels[:, 0] = 1.0
    mask = np.ones(targets.shape)
    mask[:, 1:] = negatives != contexts[:, None]

    v = center_vector(model, center)
    u = model.output[targets]
    scores = u @ v
    signs = 2.0 * labels - 1.0
    loss = float((mask * np.logaddexp(0.0, -signs * scores)).sum())

    g = mask * (_sigmoid(scores) - labels)
    grad_v = np.einsum("ck,ckd->d", g, u)
    grad_u = g[..., None] * v

    rows = model.word_ngram_rows[center] if model.uses_subwords else np.zeros(0, dtype=np.int64)
    share = grad_v / (1 + len(rows))
    return loss, SkipGramGrad(
        word_index=center,
        word_grad=share,
        subword_rows=rows,
        subword_grad=share,
        output_rows=targets.ravel(),
        output_grad=grad_u.reshape(-1, model.dim),
    )


def pair_loss_and_grad(
    model: EmbeddingModel, center: int, context: int, negatives: Sequence[int]
) -> Tuple[float, SkipGramGrad]:
    return skipgram_loss_and_grad(model, center, np.array([context]), np.array([negatives]))


def apply_sgd(model: EmbeddingModel, grad: SkipGramGrad, lr: float):
    model.word_input[grad.word_index] -= lr * grad.word_grad
    if len(grad.subword_rows):
        np.subtract.at(model.subword_input, grad.subword_rows, lr * grad.subword_grad)
    np.subtract.at(model.output, grad.output_rows, lr * grad.output_grad)


def _train_pass(
    model: EmbeddingModel,
    sentences: List[np.ndarray],
    window: int,
    negatives: int,
    lr: float,
    rng: np.random.Generator,
    progress: List[int],
    total: int,
) -> Tuple[float, int]:
    loss_sum, pairs = 0.0, 0
    for sentence in sentences:
        for pos, center in enumerate(sentence):
            contexts = np.concatenate([sentence[max(0, pos - window):pos], sentence[pos + 1:pos + window + 1]])
            progress[0] += 1
            if not len(contexts):
                continue
            noise = model.vocab.sample_negatives(rng, len(contexts) * negatives).reshape(len(contexts), negatives)
            lr_now = lr * max(MIN_LR_FRACTION, 1.0 - progress[0] / total)
            loss, grad = skipgram_loss_and_grad(model, int(center), contexts, noise)
            apply_sgd(model, grad, lr_now)
            loss_sum += loss
            pairs += len(contexts)
    return loss_sum, pairs


def train_skipgram(
    lines: Iterable[str | Sequence[str]],
    dim: int = 100,
    window: int = 5,
    negatives: int = 5,
    epochs: int = 5,
    lr: float = 0.05,
    cfg: Optional[SubwordConfig] = None,
    seed: int = 0,
    min_count: int = 1,
    threads: int = 1,
) -> EmbeddingModel:
    """
    Train skip-gram embeddings with negative sampling

    Every (center, context) pair within `window` tokens is used; the learning rate
    decays linearly over all center positions of all epochs. With threads=1 the
    result depends only on the inputs and the seed; threads>1 updates the shared
    parameters without locks and is not reproducible.

    Args:
        lines: Raw text lines (tokenized here) or token lists
        dim: Vector dimension
        window: Context window on each side
        negatives: Negative samples per pair
        epochs: Passes over the corpus
        lr: Initial learning rate
        cfg: Subword settings (subwords enabled by default)
        seed: Seed for initialisation, shuffling and negative sampling
        min_count: Frequency threshold of the vocabulary
        threads: Worker threads

    Returns:
        EmbeddingModel: The trained model, with per-epoch mean pair loss

    Raises:
        DataError: If the vocabulary is empty after filtering
    """
    cfg = cfg or SubwordConfig()
    token_lines = list(iter_sentences(lines))
    vocab = build_vocab(token_lines, min_count=min_count)
    rng = np.random.default_rng(seed)
    model = init_model(vocab, dim, cfg, rng)

    sentences = [s for s in (vocab.encode(tokens) for tokens in token_lines) if len(s) > 1]
    total = max(1, epochs * sum(len(s) for s in sentences))
    logger.info(
        f"Training skip-gram: {len(vocab)} words, {len(model.bucket_rows)} subword rows, "
        f"{len(sentences)} sentences, dim={dim}, epochs={epochs}"
    )

    progress = [0]
    for epoch in range(epochs):
        order = rng.permutation(len(sentences))
        shuffled = [sentences[i] for i in order]

        if threads > 1:
            shards = [shuffled[i::threads] for i in range(threads)]
            seeds = rng.integers(0, 2 ** 32, size=threads)
            with ThreadPoolExecutor(max_workers=threads) as executor:
                futures = [
                    executor.submit(
                        _train_pass, model, shard, window, negatives, lr,
                        np.random.default_rng(int(s)), progress, total,
                    )
                    for shard, s in zip(shards, seeds)
                ]
                results = [f.result() for f in futures]
            loss_sum = sum(r[0] for r in results)
            pairs = sum(r[1] for r in results)
        else:
            loss_sum, pairs = _train_pass(model, shuffled, window, negatives, lr, rng, progress, total)

        mean_loss = loss_sum / max(1, pairs)
        model.epoch_losses.append(mean_loss)
        logger.info(f"Skip-gram epoch {epoch + 1}/{epochs}: mean pair loss {mean_loss:.4f}")

    return model


def word_vector(model: EmbeddingModel, word: str) -> WordVector:
    """
    Vector of a word

    In-vocabulary words get their training-time composition. Unknown words get the
    mean of their known n-gram rows when subwords are available, otherwise a zero
    vector; both cases are flagged as OOV.
    """
    index = model.vocab.index.get(word)
    if index is not None:
        return WordVector(center_vector(model, index), False)

    if model.subword.enabled and len(model.subword_input):
        rows = [
            model.bucket_rows[bucket]
            for bucket in (hash_ngram(g, model.subword.bucket_count) for g in char_ngrams(word, model.subword))
            if bucket in model.bucket_rows
        ]
        if rows:
            return WordVector(model.subword_input[rows].mean(axis=0), True)
    return WordVector(np.zeros(model.dim), True)


def composed_matrix(model: EmbeddingModel) -> np.ndarray:
    return np.stack([center_vector(model, i) for i in range(len(model.vocab))]) if len(model.vocab) else np.zeros((0, model.dim))


def nearest(model: EmbeddingModel, word: str, k: int) -> List[Tuple[str, float]]:
    """Top-k vocabulary words by cosine similarity, excluding the query; ties by token"""
    if k <= 0:
        return []
    query = word_vector(model, word).vector
    matrix = composed_matrix(model)
    norms = np.linalg.norm(matrix, axis=1) * np.linalg.norm(query)
    with np.errstate(invalid="ignore", divide="ignore"):
        cosines = np.where(norms > 0, matrix @ query / norms, 0.0)

    tokens = model.vocab.tokens
    candidates = [i for i in range(len(tokens)) if tokens[i] != word]
    candidates.sort(key=lambda i: (-cosines[i], tokens[i]))
    return [(tokens[i], float(cosines[i])) for i in candidates[:k]]
