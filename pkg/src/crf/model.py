from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from src.crf.features import DenseScaler, FeatureIndex, extract_features
from src.crf.inference import chain_nll_grad, log_partition as chain_log_partition, viterbi as chain_viterbi
from src.dataset.bio import SlotSpan, spans_from_bio
from src.embeddings.skipgram import EmbeddingModel


@dataclass
class CrfModel:
    """
    Linear-chain CRF over sparse features plus optional dense embedding features

    W holds one row of label scores per sparse feature, D one row per dense
    dimension and T the label-to-label transition scores.
    """

    labels: List[str]
    index: FeatureIndex
    W: np.ndarray
    T: np.ndarray
    D: np.ndarray
    l2: float = 0.0
    embeddings: Optional[EmbeddingModel] = None
    scaler: Optional[DenseScaler] = None
    embedding_ref: Optional[dict] = None

    @classmethod
    def zeros(
        cls,
        labels: Sequence[str],
        index: FeatureIndex,
        l2: float = 0.0,
        embeddings: Optional[EmbeddingModel] = None,
        scaler: Optional[DenseScaler] = None,
    ) -> "CrfModel":
        dense_dim = embeddings.dim if embeddings is not None else 0
        n_labels = len(labels)
        index.freeze()
        return cls(
            labels=list(labels),
            index=index,
            W=np.zeros((len(index), n_labels)),
            T=np.zeros((n_labels, n_labels)),
            D=np.zeros((dense_dim, n_labels)),
            l2=l2,
            embeddings=embeddings,
            scaler=scaler,
        )

    def params(self) -> dict:
        return {"W": self.W, "T": self.T, "D": self.D}


class EncodedSentence(NamedTuple):
    feature_ids: List[np.ndarray]
    dense: np.ndarray  # T x dense_dim (T x 0 without embeddings)

    def __len__(self) -> int:
        return len(self.feature_ids)


class CrfGrad(NamedTuple):
    loss: float
    W: np.ndarray
    T: np.ndarray
    D: np.ndarray


def encode_sentence(
    model_or_index: CrfModel | FeatureIndex,
    tokens: Sequence[str],
    lemmas: Optional[Sequence[str]] = None,
    pos: Optional[Sequence[str]] = None,
    embeddings: Optional[EmbeddingModel] = None,
    scaler: Optional[DenseScaler] = None,
) -> EncodedSentence:
    """
    Map a sentence to feature ids (and standardised dense rows)

    Given a model, its index, embeddings and scaler are used. Given a bare index,
    unknown features are added to it unless it is frozen.
    """
    if isinstance(model_or_index, CrfModel):
        index = model_or_index.index
        embeddings = model_or_index.embeddings
        scaler = model_or_index.scaler
    else:
        index = model_or_index

    ids: List[np.ndarray] = []
    dense_rows: List[np.ndarray] = []
    for t in range(len(tokens)):
        fv = extract_features(tokens, t, lemmas, pos, embeddings)
        ids.append(index.lookup(fv.sparse))
        if fv.dense is not None:
            dense_rows.append(fv.dense)

    dim = embeddings.dim if embeddings is not None else 0
    dense = np.array(dense_rows).reshape(len(tokens), dim) if dense_rows else np.zeros((len(tokens), dim))
    if scaler is not None and dim:
        dense = scaler.transform(dense)
    return EncodedSentence(ids, dense)


def emissions(model: CrfModel, sent: EncodedSentence) -> np.ndarray:
    scores = np.stack([model.W[ids].sum(axis=0) for ids in sent.feature_ids])
    if model.D.shape[0]:
        scores = scores + sent.dense @ model.D
    return scores


def log_partition(model: CrfModel, sent: EncodedSentence) -> float:
    return chain_log_partition(emissions(model, sent), model.T)


def viterbi(model: CrfModel, sent: EncodedSentence) -> List[str]:
    return [model.labels[i] for i in chain_viterbi(emissions(model, sent), model.T)]


def _sentence_grad(model: CrfModel, sent: EncodedSentence, tags: Sequence[int]) -> CrfGrad:
    chain = chain_nll_grad(emissions(model, sent), model.T, tags)
    d_w = np.zeros_like(model.W)
    rows = np.concatenate(sent.feature_ids) if sent.feature_ids else np.zeros(0, dtype=np.int64)
    counts = [len(ids) for ids in sent.feature_ids]
    np.add.at(d_w, rows, np.repeat(chain.d_emissions, counts, axis=0))
    d_d = sent.dense.T @ chain.d_emissions if model.D.shape[0] else np.zeros_like(model.D)
    return CrfGrad(chain.nll, d_w, chain.d_transitions, d_d)


def nll_and_grad(
    model: CrfModel,
    batch: Sequence[Tuple[EncodedSentence, Sequence[int]]],
    executor: Optional[ThreadPoolExecutor] = None,
) -> CrfGrad:
    """
    Summed negative log-likelihood of a batch and its gradient

    The L2 term (l2/2)(|W|^2 + |D|^2) is added once per call. Per-sentence terms
    may be computed on an executor; they are reduced in batch order.

    Args:
        model: Current model
        batch: (encoded sentence, gold label indices) pairs
        executor: Optional pool for per-sentence gradients

    Returns:
        CrfGrad: Loss and gradients for W, T and D
    """
    work = lambda item: _sentence_grad(model, item[0], item[1])  # noqa: E731
    parts = list(executor.map(work, batch)) if executor is not None else [work(item) for item in batch]

    loss = 0.0
    d_w = np.zeros_like(model.W)
    d_t = np.zeros_like(model.T)
    d_d = np.zeros_like(model.D)
    for part in parts:
        loss += part.loss
        d_w += part.W
        d_t += part.T
        d_d += part.D

    if model.l2:
        loss += 0.5 * model.l2 * (float(np.sum(model.W ** 2)) + float(np.sum(model.D ** 2)))
        d_w += model.l2 * model.W
        d_d += model.l2 * model.D
    return CrfGrad(loss, d_w, d_t, d_d)


def predict(
    model: CrfModel,
    tokens: Sequence[str],
    lemmas: Optional[Sequence[str]] = None,
    pos: Optional[Sequence[str]] = None,
) -> Tuple[List[str], List[SlotSpan]]:
    """Viterbi tags and the spans they describe (invalid I- tags repaired)"""
    if not tokens:
        return [], []
    tags = viterbi(model, encode_sentence(model, tokens, lemmas, pos))
    return tags, spans_from_bio(tags, labels=model.labels)
