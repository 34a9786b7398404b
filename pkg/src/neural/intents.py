from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.dataset.models import Corpus
from src.embeddings.skipgram import EmbeddingModel
from src.evaluation.metrics import intent_scores
from src.neural.embedding import TokenIndex, init_embedding, lookup
from src.neural.layers import (
    Params,
    apply_mask,
    conv1d_maxpool,
    conv1d_maxpool_backward,
    cross_entropy,
    dropout_mask,
    init_conv,
    prefixed,
    softmax,
    subparams,
)
from src.neural.optim import AdamConfig, AdamState, adam_step
from src.neural.search import GridPoint
from src.neural.tagger import length_batches
from src.utils.errors import DataError


@dataclass
class CnnIntentClassifier:
    """
    Convolution + max-pool encoder with one softmax head per intent axis

    With `shared` the four heads read one encoder; otherwise each axis has its
    own convolution over the shared embedding table.
    """

    axes: Dict[str, List[str]]
    index: TokenIndex
    point: GridPoint
    params: Params
    shared: bool = True
    freeze_embeddings: bool = False
    pretrained: Optional[EmbeddingModel] = None
    embedding_ref: Optional[dict] = None
    dev_curve: List[float] = field(default_factory=list)

    kind = "cnn-intents"

    @property
    def frozen(self) -> frozenset:
        return frozenset({"emb"}) if self.freeze_embeddings else frozenset()

    def encoder_name(self, axis: str) -> str:
        return "conv" if self.shared else f"conv.{axis}"


def init_intents(
    axes: Mapping[str, Sequence[str]],
    index: TokenIndex,
    point: GridPoint,
    rng: np.random.Generator,
    pretrained: Optional[EmbeddingModel] = None,
    shared: bool = True,
    freeze_embeddings: bool = False,
) -> CnnIntentClassifier:
    dim = pretrained.dim if pretrained is not None else point.embedding_dim
    params: Params = {"emb": init_embedding(rng, index, dim, pretrained)}
    model = CnnIntentClassifier(
        axes={axis: list(categories) for axis, categories in axes.items()},
        index=index,
        point=point,
        params=params,
        shared=shared,
        freeze_embeddings=freeze_embeddings,
        pretrained=pretrained,
    )

    encoders = ["conv"] if shared else [f"conv.{axis}" for axis in model.axes]
    for name in encoders:
        params.update(prefixed(init_conv(rng, dim, point.kernel, point.filters), name))
    bound = 1.0 / np.sqrt(point.filters)
    for axis, categories in model.axes.items():
        params[f"head.{axis}.W"] = rng.uniform(-bound, bound, size=(point.filters, len(categories)))
        params[f"head.{axis}.b"] = np.zeros(len(categories))
    return model


def _forward(model: CnnIntentClassifier, batch: Sequence[Sequence[str]], rng: Optional[np.random.Generator]):
    p = model.params
    x, ids = lookup(p["emb"], model.index, batch, model.pretrained)
    emb_mask = dropout_mask(rng, x.shape, model.point.dropout_embedding)
    h = apply_mask(x, emb_mask)

    encoded: Dict[str, Tuple[np.ndarray, object, Optional[np.ndarray]]] = {}
    for name in dict.fromkeys(model.encoder_name(axis) for axis in model.axes):
        pooled, cache = conv1d_maxpool(subparams(p, name), h)
        mask = dropout_mask(rng, pooled.shape, model.point.dropout_hidden)
        encoded[name] = (apply_mask(pooled, mask), cache, mask)

    logits = {}
    for axis in model.axes:
        features = encoded[model.encoder_name(axis)][0]
        logits[axis] = features @ p[f"head.{axis}.W"] + p[f"head.{axis}.b"]
    return logits, (ids, emb_mask, encoded)


def batch_intent_loss(
    model: CnnIntentClassifier,
    batch_tokens: Sequence[Sequence[str]],
    batch_targets: Mapping[str, Sequence[int]],
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, Params]:
    """
    Summed cross-entropy over every axis head and every sentence of a batch

    Args:
        model: Classifier
        batch_tokens: Equal-length token lists
        batch_targets: Category ids per axis, aligned with batch_tokens
        rng: Dropout generator; None disables dropout

    Returns:
        Tuple[float, Params]: Loss and gradients
    """
    p = model.params
    logits, (ids, emb_mask, encoded) = _forward(model, batch_tokens, rng)

    loss = 0.0
    grads: Params = {}
    d_features = {name: np.zeros_like(features) for name, (features, _, _) in encoded.items()}
    for axis in model.axes:
        losses, d_logits = cross_entropy(logits[axis], np.asarray(batch_targets[axis], dtype=np.int64))
        loss += float(losses.sum())
        name = model.encoder_name(axis)
        grads[f"head.{axis}.W"] = encoded[name][0].T @ d_logits
        grads[f"head.{axis}.b"] = d_logits.sum(axis=0)
        d_features[name] += d_logits @ p[f"head.{axis}.W"].T

    dx = None
    for name, (_, cache, mask) in encoded.items():
        conv_grads, d_input = conv1d_maxpool_backward(subparams(p, name), cache, apply_mask(d_features[name], mask))
        grads.update(prefixed(conv_grads, name))
        dx = d_input if dx is None else dx + d_input

    if not model.freeze_embeddings:
        d_emb = np.zeros_like(p["emb"])
        np.add.at(d_emb, ids, apply_mask(dx, emb_mask))
        grads["emb"] = d_emb
    return loss, grads


def intent_targets(model: CnnIntentClassifier, intents: Sequence[Mapping[str, str]]) -> Dict[str, List[int]]:
    targets: Dict[str, List[int]] = {}
    for axis, categories in model.axes.items():
        lookup_ids = {c: i for i, c in enumerate(categories)}
        try:
            targets[axis] = [lookup_ids[item[axis]] for item in intents]
        except KeyError as e:
            raise DataError(f"Intent axis {axis!r}: missing or unknown category {e}")
    return targets


def intent_loss(
    model: CnnIntentClassifier,
    tokens: Sequence[str],
    intents: Mapping[str, str],
    rng: Optional[np.random.Generator] = None,
) -> Tuple[float, Params]:
    return batch_intent_loss(model, [tokens], intent_targets(model, [intents]), rng)


def predict_proba(model: CnnIntentClassifier, tokens: Sequence[str]) -> Dict[str, np.ndarray]:
    """Per-axis class probabilities with dropout off"""
    logits, _ = _forward(model, [tokens], None)
    return {axis: softmax(values)[0] for axis, values in logits.items()}


def predict_intents(model: CnnIntentClassifier, tokens: Sequence[str]) -> Dict[str, str]:
    if not tokens:
        tokens = ["<unk>"]
    return {
        axis: model.axes[axis][int(np.argmax(probs))]
        for axis, probs in predict_proba(model, tokens).items()
    }


def dev_intent_f1(model: CnnIntentClassifier, dev: Corpus) -> float:
    predicted = [predict_intents(model, u.tokens) for u in dev.utterances]
    return intent_scores([u.intents for u in dev.utterances], predicted, list(model.axes)).macro_f1


def train_intents(
    corpus: Corpus,
    dev: Optional[Corpus],
    point: GridPoint,
    seed: int,
    axes: Optional[Sequence[str]] = None,
    pretrained: Optional[EmbeddingModel] = None,
    shared: bool = True,
    freeze_embeddings: bool = False,
) -> CnnIntentClassifier:
    """
    Train the convolutional intent classifier

    The best dev epoch by mean per-axis weighted F1 is kept.

    Args:
        corpus: Training utterances
        dev: Development utterances, or None to keep the last epoch
        point: Hyperparameters (kernel, filters, dropout, lr, epochs, batch size)
        seed: Seed for initialisation, batching and dropout
        axes: Axes to train, default every schema axis
        pretrained: Optional vectors for the embedding table
        shared: One encoder for all heads, or one per axis
        freeze_embeddings: Keep the embedding table fixed

    Returns:
        CnnIntentClassifier: The trained classifier

    Raises:
        DataError: If the corpus is empty or an axis is missing from its labels
    """
    if not len(corpus):
        raise DataError("Cannot train an intent classifier on an empty corpus")
    schema_axes = corpus.schema.intent_axes
    selected = list(axes) if axes is not None else list(schema_axes)
    for axis in selected:
        if axis not in schema_axes or any(axis not in u.intents for u in corpus.utterances):
            raise DataError(f"Intent axis {axis!r} is missing from the corpus labels")

    rng = np.random.default_rng(seed)
    index = TokenIndex.build(u.tokens for u in corpus.utterances)
    model = init_intents(
        {axis: schema_axes[axis] for axis in selected}, index, point, rng, pretrained, shared, freeze_embeddings
    )
    tokens = [u.tokens for u in corpus.utterances]
    targets = intent_targets(model, [u.intents for u in corpus.utterances])
    logger.info(
        f"Training CNN intent classifier on {len(corpus)} utterances: axes {selected}, "
        f"kernel {point.kernel}, filters {point.filters}, shared={shared}"
    )
    if point.epochs == 0:
        logger.warning("Intent classifier epochs=0: returning the untrained model")
        return model

    state = AdamState(model.params, AdamConfig(lr=point.lr))
    best_f1, best_params, stale = -1.0, None, 0
    for epoch in range(point.epochs):
        epoch_loss = 0.0
        for batch in length_batches([len(t) for t in tokens], point.batch_size, rng):
            batch_targets = {axis: [values[i] for i in batch] for axis, values in targets.items()}
            loss, grads = batch_intent_loss(model, [tokens[i] for i in batch], batch_targets, rng)
            scale = 1.0 / len(batch)
            adam_step(state, model.params, {k: v * scale for k, v in grads.items()}, model.frozen)
            epoch_loss += loss

        mean_loss = epoch_loss / len(corpus)
        if dev is None or not len(dev):
            logger.info(f"Intent epoch {epoch + 1}/{point.epochs}: loss {mean_loss:.4f}")
            continue

        f1 = dev_intent_f1(model, dev)
        model.dev_curve.append(f1)
        logger.info(f"Intent epoch {epoch + 1}/{point.epochs}: loss {mean_loss:.4f}, dev macro F1 {f1:.4f}")
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
