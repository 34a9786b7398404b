import numpy as np
import pytest

from src.embeddings.io import load_vectors, save_vectors, subword_sidecar
from src.embeddings.skipgram import (
    init_model,
    nearest,
    pair_loss_and_grad,
    skipgram_loss_and_grad,
    train_skipgram,
    word_vector,
)
from src.embeddings.subword import SubwordConfig, char_ngrams, hash_ngram
from src.embeddings.vocab import build_vocab
from src.utils.errors import DataError
from tests.conftest import EXAMPLE_DATA

CORPUS = [
    "la créatinine est normale",
    "la créatinine est élevée",
    "la glycémie est normale",
    "la glycémie est basse",
    "le potassium est normal",
    "le sodium est bas",
] * 5


def test_fnv1a_hash_of_known_string():
    assert hash_ngram("dat", 2 ** 32) == 3612282246
    assert hash_ngram("dat", 2 ** 21) == 986502


def test_char_ngrams_include_bracketed_word():
    cfg = SubwordConfig(n_min=3, n_max=6)
    assert char_ngrams("dat", cfg) == ["<da", "dat", "at>", "<dat", "dat>", "<dat>"]

    # The whole word is added when it falls outside the n-gram range
    short = SubwordConfig(n_min=3, n_max=4)
    assert char_ngrams("dat", short)[-1] == "<dat>"
    assert char_ngrams("dat", short).count("<dat>") == 1


def test_build_vocab_orders_by_count():
    vocab = build_vocab(["b a", "a c", "a b"], min_count=2)

    assert vocab.tokens == ["a", "b"]
    assert vocab.count("a") == 3
    assert "c" not in vocab
    assert vocab.encode(["a", "c", "b"]).tolist() == [0, 1]

    draws = vocab.sample_negatives(np.random.default_rng(0), 1000)
    assert set(draws.tolist()) <= {0, 1}


def _small_model(subwords: bool):
    rng = np.random.default_rng(0)
    vocab = build_vocab(CORPUS)
    cfg = SubwordConfig(n_min=3, n_max=4, bucket_count=997, enabled=subwords)
    model = init_model(vocab, 5, cfg, rng)
    model.output = rng.normal(0.0, 0.5, size=model.output.shape)
    model.word_input = rng.normal(0.0, 0.5, size=model.word_input.shape)
    return model


@pytest.mark.parametrize("subwords", [False, True])
def test_skipgram_gradient_matches_finite_differences(subwords):
    model = _small_model(subwords)
    center = model.vocab.index["créatinine"]
    contexts = np.array([model.vocab.index["la"], model.vocab.index["est"]])
    negatives = np.array([[2, 3], [4, contexts[1]]])

    def loss():
        return skipgram_loss_and_grad(model, center, contexts, negatives)[0]

    _, grad = skipgram_loss_and_grad(model, center, contexts, negatives)
    eps = 1e-6

    for j in range(model.dim):
        model.word_input[center, j] += eps
        up = loss()
        model.word_input[center, j] -= 2 * eps
        down = loss()
        model.word_input[center, j] += eps
        assert grad.word_grad[j] == pytest.approx((up - down) / (2 * eps), abs=1e-6)

    full_output = np.zeros_like(model.output)
    np.add.at(full_output, grad.output_rows, grad.output_grad)
    for row in (contexts[0], contexts[1], 2):
        model.output[row, 0] += eps
        up = loss()
        model.output[row, 0] -= 2 * eps
        down = loss()
        model.output[row, 0] += eps
        assert full_output[row, 0] == pytest.approx((up - down) / (2 * eps), abs=1e-6)

    if subwords:
        row = grad.subword_rows[0]
        model.subword_input[row, 1] += eps
        up = loss()
        model.subword_input[row, 1] -= 2 * eps
        down = loss()
        model.subword_input[row, 1] += eps
        expected = grad.subword_grad[1] * np.sum(grad.subword_rows == row)
        assert expected == pytest.approx((up - down) / (2 * eps), abs=1e-6)


def test_negative_equal_to_context_is_ignored():
    model = _small_model(False)
    center, context = 0, 1

    masked, _ = pair_loss_and_grad(model, center, context, [context, context])
    positive_only = np.logaddexp(0.0, -model.output[context] @ model.word_input[center])
    assert masked == pytest.approx(positive_only)


def test_train_skipgram_is_reproducible_and_learns():
    cfg = SubwordConfig(n_min=3, n_max=5, bucket_count=5000)
    first = train_skipgram(CORPUS, dim=10, window=2, negatives=3, epochs=10, lr=0.5, cfg=cfg, seed=11)
    second = train_skipgram(CORPUS, dim=10, window=2, negatives=3, epochs=10, lr=0.5, cfg=cfg, seed=11)

    np.testing.assert_array_equal(first.word_input, second.word_input)
    np.testing.assert_array_equal(first.subword_input, second.subword_input)
    assert len(first.epoch_losses) == 10
    assert first.epoch_losses[-1] < first.epoch_losses[0]


def test_train_skipgram_rejects_empty_vocabulary():
    with pytest.raises(DataError):
        train_skipgram(["", "   "], dim=4, epochs=1)
    with pytest.raises(DataError):
        train_skipgram(CORPUS, dim=4, epochs=1, min_count=1000)


def test_word_vector_for_unknown_words():
    with_subwords = _small_model(True)
    vector, oov = word_vector(with_subwords, "créatininémie")
    assert oov
    assert np.any(vector)

    without = _small_model(False)
    vector, oov = word_vector(without, "créatininémie")
    assert oov
    assert not np.any(vector)

    vector, oov = word_vector(without, "la")
    assert not oov
    np.testing.assert_array_equal(vector, without.word_input[without.vocab.index["la"]])


def test_load_example_vectors_and_nearest():
    model = load_vectors(EXAMPLE_DATA / "tiny.vec")

    assert model.vocab.tokens == ["crp", "créatinine", "glycémie", "urée"]
    neighbours = nearest(model, "crp", 2)
    assert [token for token, _ in neighbours] == ["créatinine", "glycémie"]
    assert neighbours[0][1] == pytest.approx(0.9 / np.sqrt(0.82))
    assert neighbours[1][1] == 0.0
    assert nearest(model, "crp", 0) == []


def test_save_and_load_vectors(tmp_path):
    cfg = SubwordConfig(n_min=3, n_max=4, bucket_count=5000)
    model = train_skipgram(CORPUS, dim=6, window=2, negatives=2, epochs=1, cfg=cfg, seed=2)
    written = save_vectors(model, tmp_path / "notes.vec")

    assert written == [tmp_path / "notes.vec", subword_sidecar(tmp_path / "notes.vec")]
    header = (tmp_path / "notes.vec").read_text(encoding="utf-8").splitlines()[0]
    assert header == f"{len(model.vocab)} 6"

    loaded = load_vectors(tmp_path / "notes.vec")
    assert loaded.vocab.tokens == model.vocab.tokens
    for token in ("la", "glycémie", "créatininémie"):
        np.testing.assert_allclose(word_vector(loaded, token).vector, word_vector(model, token).vector, atol=1e-5)


@pytest.mark.parametrize(
    "content",
    [
        "3 2\na 1 2\nb 3 4\n",
        "2 2\na 1 2\nb 3\n",
        "2 2\na 1 2\na 3 4\n",
        "2 2\na 1 2\nb x 4\n",
        "two by two\n",
    ],
)
def test_load_vectors_rejects_malformed_files(tmp_path, content):
    path = tmp_path / "bad.vec"
    path.write_text(content, encoding="utf-8")

    with pytest.raises(DataError):
        load_vectors(path)


def test_load_vectors_missing_file(tmp_path):
    with pytest.raises(DataError):
        load_vectors(tmp_path / "absent.vec")


def test_negative_sampling_follows_smoothed_counts():
    vocab = build_vocab(["a a a a b"])
    draws = vocab.sample_negatives(np.random.default_rng(0), 10 ** 6)

    ratio = np.sum(draws == vocab.index["a"]) / np.sum(draws == vocab.index["b"])
    assert ratio == pytest.approx(4 ** 0.75, rel=0.02)


def test_skipgram_loss_falls_over_the_first_epochs():
    pairs = [[f"a{k}", f"b{k}"] for k in range(20)] * 200
    model = train_skipgram(
        pairs, dim=8, window=1, negatives=5, epochs=5, lr=0.05, cfg=SubwordConfig(enabled=False), seed=0
    )

    assert model.epoch_losses[0] > model.epoch_losses[1] > model.epoch_losses[2]
