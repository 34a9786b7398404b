import json
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, field_validator

from src.crf.features import DenseScaler, FeatureIndex
from src.crf.model import CrfModel, EncodedSentence, encode_sentence, nll_and_grad, predict
from src.dataset.models import Corpus
from src.embeddings.io import load_vectors
from src.embeddings.skipgram import EmbeddingModel
from src.evaluation.metrics import span_f1
from src.neural.optim import AdamConfig, AdamState, adam_step
from src.utils.errors import DataError
from src.utils.files import atomic_write_text, canonical_json, sha256_file

CRF_FORMAT = "nlu-forge-crf/1"


class TrainOpts(BaseModel):
    """Optimisation settings shared by the CRF trainer"""

    seed: int
    lr: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 10
    batch_size: int = 16
    l2: float = 1e-3
    patience: int = 3
    threads: int = 1

    @field_validator("lr")
    @classmethod
    def _positive_lr(cls, v: float) -> float:
        if v <= 0:
            raise ValueError(f"lr must be > 0, got {v}")
        return v

    @field_validator("epochs", "patience")
    @classmethod
    def _non_negative(cls, v: int) -> int:
        if v < 0:
            raise ValueError("must be >= 0")
        return v

    @field_validator("batch_size", "threads")
    @classmethod
    def _positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be >= 1")
        return v


def dev_span_f1(model: CrfModel, dev: Corpus) -> float:
    gold, predicted = [], []
    for utterance in dev.utterances:
        _, spans = predict(model, utterance.tokens, utterance.lemmas, utterance.pos)
        gold.append(utterance.spans())
        predicted.append(spans)
    return span_f1(gold, predicted).weighted_f1


def _encode_corpus(
    index: FeatureIndex, corpus: Corpus, embeddings: Optional[EmbeddingModel]
) -> List[EncodedSentence]:
    return [encode_sentence(index, u.tokens, u.lemmas, u.pos, embeddings=embeddings) for u in corpus.utterances]


def train_crf(
    corpus: Corpus,
    dev: Optional[Corpus],
    opts: TrainOpts,
    embeddings: Optional[EmbeddingModel] = None,
    embeddings_path: Optional[str | Path] = None,
) -> CrfModel:
    """
    Train a CRF slot tagger with mini-batch Adam

    Features seen in the training corpus fix the feature dictionary. After every
    epoch the model is scored on dev (span F1) and the best epoch is kept; training
    stops after `opts.patience` epochs without improvement (0 disables stopping).

    Args:
        corpus: Training utterances
        dev: Development utterances, or None to keep the last epoch
        opts: Optimisation settings
        embeddings: Optional embedding model providing dense features
        embeddings_path: Vector file the embeddings came from, recorded on save

    Returns:
        CrfModel: The trained model

    Raises:
        DataError: If the training corpus is empty
    """
    if not len(corpus):
        raise DataError("Cannot train a CRF on an empty corpus")

    labels = corpus.schema.slot_labels
    label_ids = {label: i for i, label in enumerate(labels)}

    index = FeatureIndex()
    encoded = _encode_corpus(index, corpus, embeddings)
    scaler = None
    if embeddings is not None:
        scaler = DenseScaler.fit(np.concatenate([s.dense for s in encoded]))
        encoded = [EncodedSentence(s.feature_ids, scaler.transform(s.dense)) for s in encoded]

    model = CrfModel.zeros(labels, index, l2=opts.l2, embeddings=embeddings, scaler=scaler)
    if embeddings_path is not None:
        model.embedding_ref = {"path": str(embeddings_path), "sha256": sha256_file(embeddings_path)}
    gold = [np.array([label_ids[t] for t in u.slot_tags], dtype=np.int64) for u in corpus.utterances]

    logger.info(
        f"Training CRF on {len(corpus)} utterances: {len(index)} sparse features, "
        f"{model.D.shape[0]} dense features, {len(labels)} labels"
    )
    if opts.epochs == 0:
        logger.warning("CRF epochs=0: returning the untrained (all-zero) model")
        return model

    rng = np.random.default_rng(opts.seed)
    state = AdamState(model.params(), AdamConfig(lr=opts.lr, beta1=opts.beta1, beta2=opts.beta2, eps=opts.eps))
    executor = ThreadPoolExecutor(max_workers=opts.threads) if opts.threads > 1 else None

    best_f1, best_params, stale = -1.0, None, 0
    try:
        for epoch in range(opts.epochs):
            order = rng.permutation(len(encoded))
            epoch_loss = 0.0
            for start in range(0, len(order), opts.batch_size):
                batch = [(encoded[i], gold[i]) for i in order[start:start + opts.batch_size]]
                grad = nll_and_grad(model, batch, executor)
                adam_step(state, model.params(), {"W": grad.W, "T": grad.T, "D": grad.D})
                epoch_loss += grad.loss

            if dev is None or not len(dev):
                logger.info(f"CRF epoch {epoch + 1}/{opts.epochs}: loss {epoch_loss:.4f}")
                continue

            f1 = dev_span_f1(model, dev)
            logger.info(f"CRF epoch {epoch + 1}/{opts.epochs}: loss {epoch_loss:.4f}, dev span F1 {f1:.4f}")
            if f1 > best_f1:
                best_f1, stale = f1, 0
                best_params = {name: value.copy() for name, value in model.params().items()}
            else:
                stale += 1
                if opts.patience and stale >= opts.patience:
                    logger.info(f"Early stopping after epoch {epoch + 1}")
                    break
    finally:
        if executor is not None:
            executor.shutdown()

    if best_params is not None:
        model.W, model.T, model.D = best_params["W"], best_params["T"], best_params["D"]
        logger.info(f"Kept best dev epoch (span F1 {best_f1:.4f})")
    return model


def save_crf(model: CrfModel, path: str | Path) -> str:
    """Write the model as JSON: labels, feature names, weights and embedding reference"""
    record = {
        "format": CRF_FORMAT,
        "labels": model.labels,
        "l2": model.l2,
        "features": model.index.names,
        "W": model.W.tolist(),
        "T": model.T.tolist(),
        "D": model.D.tolist(),
        "scaler": (
            {"mean": model.scaler.mean.tolist(), "std": model.scaler.std.tolist()}
            if model.scaler is not None
            else None
        ),
        "embeddings": model.embedding_ref,
    }
    output_path = atomic_write_text(path, canonical_json(record))
    logger.info(f"Saved CRF model to {output_path}")
    return output_path


def _matrix(values: list, rows: int, cols: int) -> np.ndarray:
    return np.array(values, dtype=np.float64).reshape(rows, cols)


def load_crf(path: str | Path, embeddings_path: Optional[str | Path] = None) -> CrfModel:
    """
    Read a model written by save_crf

    When the model used dense features, the referenced vector file (or
    `embeddings_path`) is loaded and its checksum compared with the recorded one.

    Raises:
        DataError: If the file is missing or malformed, or the embeddings changed
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing model: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            record = json.load(f)
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: malformed CRF model ({e.msg})")
    if record.get("format") != CRF_FORMAT:
        raise DataError(f"{path}: not a CRF model file")

    labels: List[str] = record["labels"]
    index = FeatureIndex(record["features"])
    n_labels = len(labels)

    embeddings, scaler = None, None
    ref = record.get("embeddings")
    dense_dim = len(record["D"])
    if dense_dim:
        vector_path = Path(embeddings_path or (ref or {}).get("path", ""))
        if not vector_path.is_file():
            raise DataError(f"{path}: model needs embeddings but {vector_path} is missing")
        if ref and ref.get("sha256") and sha256_file(vector_path) != ref["sha256"]:
            raise DataError(f"{vector_path}: checksum differs from the one recorded in {path}")
        embeddings = load_vectors(vector_path)
        scaler_record = record.get("scaler")
        if scaler_record:
            scaler = DenseScaler(np.array(scaler_record["mean"]), np.array(scaler_record["std"]))

    model = CrfModel(
        labels=labels,
        index=index,
        W=_matrix(record["W"], len(index), n_labels),
        T=_matrix(record["T"], n_labels, n_labels),
        D=_matrix(record["D"], dense_dim, n_labels),
        l2=record.get("l2", 0.0),
        embeddings=embeddings,
        scaler=scaler,
        embedding_ref=ref,
    )
    logger.info(f"Loaded CRF model from {path} ({len(index)} features)")
    return model


def predict_corpus(model: CrfModel, corpus: Corpus) -> List[Tuple[List[str], list]]:
    return [predict(model, u.tokens, u.lemmas, u.pos) for u in corpus.utterances]
