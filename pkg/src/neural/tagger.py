from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.crf.inference import chain_nll_grad, viterbi as chain_viterbi
from src.dataset.bio import SlotSpan, spans_from_bio
from src.dataset.models import Corpus, Utterance
from src.embeddings.skipgram import EmbeddingModel
from src.evaluation.metrics import span_f1
from src.neural.embedding import TokenIndex, init_embedding, lookup
from src.neural.layers import (
    Params,
    apply_mask,
    bilstm_backward,
    bilstm_forward,
    cross_entropy,
    dropout_mask,
    init_lstm,
    prefixed,
    softmax,
    subparams,
)
from src.neural.optim import AdamConfig, AdamState, adam_step
from src.neural.search import GridPoint
from src.utils.errors import ConfigError, DataError

OUTPUT_MODES = ("softmax", "crf")


@dataclass
class BiLstmTagger:
    """Embedding -> 1-2 biLSTM layers -> per-token label scores, softmax or CRF on top"""

    labels: List[str]
    index: TokenIndex
    point: GridPoint
    output: str
    params: Params
    freeze_embeddings: bool = False
    pretrained: Optional[EmbeddingModel] = None
    embedding_ref: Optional[dict] = None
    dev_curve: List[float] = field(default_factory=list)

    kind = "bilstm-tagger"

    @property
    def frozen(self) -> frozenset:
        return frozenset({"emb"}) if self.freeze_embeddings else frozenset()


def init_tagger(
    labels: Sequence[str],
    index: TokenIndex,
    point: GridPoint,
    output: str,
    rng: np.random.Generator,
    pretrained: Optional[EmbeddingModel] = None,
    freeze_embeddings: bool = False,
) -> BiLstmTagger:
    """Randomly initialised tagger; embedding size follows the pretrained vectors when given"""
    if output not in OUTPUT_MODES:
        raise ConfigError(f"Unknown tagger output {output!r}; expected one of {OUTPUT_MODES}")
    dim = pretrained.dim if pretrained is not None else point.embedding_dim
    if pretrained is not None and dim != point.embedding_dim:
        logger.debug(f"Embedding size {point.embedding_dim} replaced by pretrained size {dim}")

    params: Params = {"emb": init_embedding(rng, index, dim, pretrained)}
    input_dim = dim
    for layer in range(point.layers):
        for direction in ("fwd", "bwd"):
            params.update(prefixed(init_lstm(rng, input_dim, point.hidden), f"lstm{layer}.{direction}"))
        input_dim = 2 * point.hidden

    n_labels = len(labels)
    bound = 1.0 / np.sqrt(input_dim)
    params["proj.W"] = rng.uniform(-bound, bound, size=(input_dim, n_labels))
    params["proj.b"] = np.zeros(n_labels)
    if output == "crf":
        params["crf.T"] = np.zeros((n_labels, n_labels))

    return BiLstmTagger(
        labels=list(labels),
        index=index,
        point=point,
        output=output,
        params=params,
        freeze_embeddings=freeze_embeddings,
        pretrained=pretrained,
    )


def _forward(model: BiLstmTagger, batch: Sequence[Sequence[str]], rng: Optional[np.random.Generator]):
    p = model.params
    x, ids = lookup(p["emb"], model.index, batch, model.pretrained)
    emb_mask = dropout_mask(rng, x.shape, model.point.dropout_embedding)
    h = apply_mask(x, emb_mask)

    layer_caches = []
    for layer in range(model.point.layers):
        out, cache = bilstm_forward(subparams(p, f"lstm{layer}"), h)
        mask = dropout_mask(rng, out.shape, model.point.dropout_hidden)
        h = apply_mask(out, mask)
        layer_caches.append((cache, mask))

    scores = h @ p["proj.W"] + p["proj.b"]
    return scores, (ids, emb_mask, layer_caches, h)


def _backward(model: BiLstmTagger, caches, d_scores: np.ndarray) -> Params:
    p = model.params
    ids, emb_mask, layer_caches, h = caches
    grads: Params = {
        "proj.W": np.einsum("btk,btl->kl", h, d_scores),
        "proj.b": d_scores.sum(axis=(0, 1)),
    }
    dh = d_scores @ p["proj.W"].T
    for layer in range(model.point.layers - 1, -1, -1):
        cache, mask = layer_caches[layer]
        dh = apply_mask(dh, mask)
        layer_grads, dh = bilstm_backward(subparams(p, f"lstm{layer}"), cache, dh)
        grads.update(prefixed(layer_grads, f"lstm{layer}"))

    if not model.freeze_embeddings:
        dx = apply_mask(dh, emb_mask)
        d_emb = np.zeros_like(p["emb"])
        np.add.at(d_emb, ids, dx)
        grads["emb"] = d_emb
    return grads


def batch_tag_loss(
    model: BiLstmTagger,
    batch_tokens: Sequence[Sequence[str]],
    batch_tags: Sequence[Sequence[int]],
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, Params]:
    """
    Summed per-sentence loss of a batch of equal-length sentences

    Softmax mode uses the mean token cross-entropy of each sentence, CRF mode the
    sentence negative log-likelihood. Passing `rng` turns dropout on.

    Returns:
        Tuple[float, Params]: Loss and gradients for every trainable parameter
    """
    tags = np.asarray(batch_tags, dtype=np.int64)
    scores, caches = _forward(model, batch_tokens, rng)
    B, T, _ = scores.shape

    extra: Params = {}
    if model.output == "softmax":
        losses, d_scores = cross_entropy(scores, tags)
        loss = float(losses.mean(axis=1).sum())
        d_scores = d_scores / T
    else:
        transitions = model.params["crf.T"]
        d_scores = np.zeros_like(scores)
        d_t = np.zeros_like(transitions)
        loss = 0.0
        for b in range(B):
            chain = chain_nll_grad(scores[b], transitions, tags[b])
            loss += chain.nll
            d_scores[b] = chain.d_emissions
            d_t += chain.d_transitions
        extra["crf.T"] = d_t

    grads = _backward(model, caches, d_scores)
    grads.update(extra)
    return loss, grads


def bilstm_tag_loss(
    model: BiLstmTagger, utterance: Utterance, rng: Optional[np.random.Generator] = None
) -> Tuple[float, Params]:
    label_ids = {label: i for i, label in enumerate(model.labels)}
    return batch_tag_loss(model, [utterance.tokens], [[label_ids[t] for t in utterance.slot_tags]], rng)


def tag_scores(model: BiLstmTagger, tokens: Sequence[str]) -> np.ndarray:
    """Label scores (T, L) with dropout off"""
    scores, _ = _forward(model, [tokens], None)
    return scores[0]


def predict_tags(model: BiLstmTagger, tokens: Sequence[str]) -> List[str]:
    if not tokens:
        return []
    scores = tag_scores(model, tokens)
    if model.output == "crf":
        path = chain_viterbi(scores, model.params["crf.T"])
    else:
        path = softmax(scores).argmax(axis=1).tolist()
    return [model.labels[i] for i in path]


def predict(model: BiLstmTagger, tokens: Sequence[str]) -> Tuple[List[str], List[SlotSpan]]:
    tags = predict_tags(model, tokens)
    return tags, spans_from_bio(tags, labels=model.labels)


def dev_span_f1(model: BiLstmTagger, dev: Corpus) -> float:
    predicted = [predict(model, u.tokens)[1] for u in dev.utterances]
    return span_f1([u.spans() for u in dev.utterances], predicted).weighted_f1


def length_batches(lengths: Sequence[int], batch_size: int, rng: np.random.Generator) -> List[np.ndarray]:
    """Shuffled batches of indices whose items all have the same length"""
    buckets: Dict[int, List[int]] = {}
    for i, n in enumerate(lengths):
        buckets.setdefault(n, []).append(i)
    batches = []
    for n in sorted(buckets):
        members = rng.permutation(buckets[n])
        batches.extend(members[s:s + batch_size] for s in range(0, len(members), batch_size))
    return [batches[i] for i in rng.permutation(len(batches))]


def train_tagger(
    corpus: Corpus,
    dev: Optional[Corpus],
    point: GridPoint,
    seed: int,
    output: str = "softmax",
    pretrained: Optional[EmbeddingModel] = None,
    freeze_embeddings: bool = False,
) -> BiLstmTagger:
    """
    Train a biLSTM slot tagger with Adam and dropout

    Sentences are batched by length so no padding enters the loss; each batch
    gradient is divided by the batch size. The best dev epoch (span F1) is kept.

    Args:
        corpus: Training utterances
        dev: Development utterances, or None to keep the last epoch
        point: Hyperparameters
        seed: Seed for initialisation, batching and dropout
        output: "softmax" or "crf"
        pretrained: Optional vectors for the embedding table
        freeze_embeddings: Keep the embedding table fixed

    Returns:
        BiLstmTagger: The trained tagger

    Raises:
        DataError: If the training corpus is empty
    """
    if not len(corpus):
        raise DataError("Cannot train a tagger on an empty corpus")

    rng = np.random.default_rng(seed)
    labels = corpus.schema.slot_labels
    label_ids = {label: i for i, label in enumerate(labels)}
    index = TokenIndex.build(u.tokens for u in corpus.utterances)
    model = init_tagger(labels, index, point, output, rng, pretrained, freeze_embeddings)

    tokens = [u.tokens for u in corpus.utterances]
    tags = [[label_ids[t] for t in u.slot_tags] for u in corpus.utterances]
    logger.info(
        f"Training biLSTM-{output} tagger on {len(corpus)} utterances: vocab {len(index)}, "
        f"hidden {point.hidden}, layers {point.layers}"
    )
    if point.epochs == 0:
        logger.warning("Tagger epochs=0: returning the untrained model")
        return model

    state = AdamState(model.params, AdamConfig(lr=point.lr))
    best_f1, best_params, stale = -1.0, None, 0
    for epoch in range(point.epochs):
        epoch_loss = 0.0
        for batch in length_batches([len(t) for t in tokens], point.batch_size, rng):
            loss, grads = batch_tag_loss(model, [tokens[i] for i in batch], [tags[i] for i in batch], rng)
            scale = 1.0 / len(batch)
            adam_step(state, model.params, {k: v * scale for k, v in grads.items()}, model.frozen)
            epoch_loss += loss

        mean_loss = epoch_loss / len(corpus)
        if dev is None or not len(dev):
            logger.info(f"Tagger epoch {epoch + 1}/{point.epochs}: loss {mean_loss:.4f}")
            continue

        f1 = dev_span_f1(model, dev)
        model.dev_curve.append(f1)
        logger.info(f"Tagger epoch {epoch + 1}/{point.epochs}: loss {mean_loss:.4f}, dev span F1 {f1:.4f}")
        if f1 > best_f1:
            best_f1, stale = f1, 0
            best_params = {k: v.copy() for k, v in model.params.items()}
        else:
            stale += 1
            if point.patience and stale >= point.patience:
                logger.info(f"Early stopping after epoch {epoch + 1}")
                break

    if best_params is not None:
        model.params = best_params
    return model
