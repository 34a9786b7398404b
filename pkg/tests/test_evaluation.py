import json
import math

import pytest

from src.dataset.bio import SlotSpan, spans_from_bio
from src.evaluation.base import IntentPredictor, SlotPredictor
from src.evaluation.folds import FoldPlan, ci95, repeated_kfold
from src.evaluation.metrics import accuracy, intent_scores, span_f1, token_f1
from src.evaluation.report import evaluate, render_report, save_report
from src.evaluation.stats import BigramModel, corpus_stats, mention_lengths, vocab_overlap
from src.utils.errors import ConfigError, DataError


class GoldSlots(SlotPredictor):
    """Answers with the gold tags of a known corpus"""

    def __init__(self, corpus):
        self.tags = {tuple(u.tokens): u.slot_tags for u in corpus.utterances}

    def predict_slots(self, tokens, lemmas=None, pos=None):
        tags = self.tags[tuple(tokens)]
        return tags, spans_from_bio(tags)


class ConstantIntents(IntentPredictor):
    def __init__(self, answer):
        self.answer = answer

    def predict_intents(self, tokens):
        return dict(self.answer)


def span(start, end, kind):
    return SlotSpan(start=start, end=end, kind=kind)


def test_span_f1_weights_by_gold_support():
    gold = [[span(0, 1, "LAB"), span(2, 4, "DATE")]]
    predicted = [[span(0, 1, "LAB"), span(2, 3, "DATE")]]
    table = span_f1(gold, predicted)

    assert table.weighted_f1 == pytest.approx(0.5)
    assert table.per_label["LAB"].f1 == 1.0
    assert table.per_label["DATE"].precision == 0.0
    assert table.per_label["DATE"].support == 1


def test_span_f1_with_no_gold_spans():
    assert span_f1([[]], [[]]).weighted_f1 == 1.0
    assert span_f1([[]], [[span(0, 1, "LAB")]]).weighted_f1 == 0.0
    with pytest.raises(ValueError):
        span_f1([[]], [])


def test_token_f1():
    gold = [["B-LAB", "O"]]
    predicted = [["B-LAB", "B-DATE"]]

    assert token_f1(gold, predicted).weighted_f1 == pytest.approx(0.5)
    assert token_f1(["B-LAB", "O"], ["B-LAB", "B-DATE"]).weighted_f1 == pytest.approx(0.5)
    assert token_f1(gold, predicted, exclude_o=True).weighted_f1 == pytest.approx(1.0)
    assert accuracy(gold, predicted) == 0.5
    with pytest.raises(ValueError):
        token_f1(["O"], ["O", "O"])


def test_intent_scores_weighted_f1():
    gold = [{"time": c} for c in "aaabbc"]
    predicted = [{"time": c} for c in "aabbcc"]
    scores = intent_scores(gold, predicted)

    assert scores.per_axis["time"].weighted_f1 == pytest.approx(61 / 90)
    assert scores.macro_f1 == pytest.approx(61 / 90)


def test_intent_scores_macro_over_axes():
    gold = [{"time": "last", "interpretation": "low"}, {"time": "all", "interpretation": "low"}]
    predicted = [{"time": "last", "interpretation": "high"}, {"time": "all", "interpretation": "low"}]
    scores = intent_scores(gold, predicted, ["time", "interpretation"])

    assert scores.per_axis["time"].weighted_f1 == 1.0
    assert scores.per_axis["interpretation"].weighted_f1 == pytest.approx(2 / 3)
    assert scores.macro_f1 == pytest.approx((1.0 + 2 / 3) / 2)


def test_repeated_kfold_balances_folds():
    plan = repeated_kfold(178, k=5, reps=3, seed=0)

    assert plan.assignments[0] != plan.assignments[1]
    for folds in plan.assignments:
        assert sorted(len(f) for f in folds) == [35, 35, 36, 36, 36]
        assert sorted(i for f in folds for i in f) == list(range(178))
    assert len(list(plan.folds())) == 15
    assert repeated_kfold(178, 5, 3, seed=0) == plan


@pytest.mark.parametrize("k, reps", [(0, 1), (11, 1), (2, 0)])
def test_repeated_kfold_rejects_bad_settings(k, reps):
    with pytest.raises(ConfigError):
        repeated_kfold(10, k=k, reps=reps)


def test_fold_plan_must_partition_items():
    with pytest.raises(ValueError):
        FoldPlan(n_items=4, k=2, repetitions=1, seed=0, assignments=[[[0, 1], [1, 2]]])
    with pytest.raises(ValueError):
        FoldPlan(n_items=4, k=2, repetitions=1, seed=0, assignments=[[[0, 1, 2], [3]]])


def test_ci95():
    interval = ci95(list(range(1, 101)))

    assert interval.mean == pytest.approx(50.5)
    assert interval.lo == pytest.approx(3.475)
    assert interval.hi == pytest.approx(97.525)
    assert ci95([0.7]) == (0.7, 0.7, 0.7)
    with pytest.raises(ValueError):
        ci95([])


def test_bigram_perplexity():
    model = BigramModel([["a", "b"], ["a", "b"]])

    assert model.outcomes == 4
    assert model.perplexity([["a", "b"]]) == pytest.approx(2.0)
    # Unknown words share one class and raise the perplexity
    assert model.perplexity([["a", "zzz"]]) > 2.0
    assert math.isnan(model.perplexity([]))


def test_vocabulary_helpers():
    assert vocab_overlap({"a", "b", "c", "d"}, {"a", "b"}) == 0.5
    assert vocab_overlap(set(), {"a"}) == 0.0
    assert mention_lengths(["protéine C réactive", ["crp"]]) == [3, 1]


def test_corpus_stats(tiny_corpus):
    stats = corpus_stats(tiny_corpus, reference_corpus=tiny_corpus)

    assert stats.n_utterances == 3
    assert stats.n_tokens == 17
    assert stats.oov_types == 0 and stats.oov_tokens == 0
    assert stats.overlap == 1.0
    assert stats.mentions["LAB"].count == 3
    assert stats.mentions["LAB"].median_length == 1.0
    assert stats.mentions["LAB"].max_length == 3
    assert stats.mentions["LAB"].reference_overlap == 1.0
    assert stats.mentions["DATE"].count == 1
    assert stats.perplexity > 1.0

    alone = corpus_stats(tiny_corpus)
    assert alone.overlap is None and alone.perplexity is None


def test_evaluate_perfect_slots_and_constant_intents(generated_corpora, tmp_path):
    _, dev = generated_corpora
    plan = repeated_kfold(len(dev), k=5, reps=2, seed=1)
    answer = dict(dev.utterances[0].intents)
    report = evaluate(dev, plan, GoldSlots(dev), ConstantIntents(answer), name="oracle")

    assert report.slots.span_folds.mean == 1.0
    assert report.slots.span_folds.lo == report.slots.span_folds.hi == 1.0
    assert len(report.slots.span_folds.fold_scores) == 10
    assert report.slots.token.weighted_f1 == 1.0
    assert list(report.intents.axis_folds) == list(dev.schema.intent_axes)
    assert 0.0 < report.intents.macro_folds.mean < 1.0

    text = render_report(report)
    assert "Evaluation: oracle" in text
    assert "span (weighted)     1.00 [1.00-1.00]" in text
    assert "macro" in text

    path = save_report(report, tmp_path / "report.json")
    with open(path, "r", encoding="utf-8") as f:
        assert json.load(f)["n_items"] == len(dev)


def test_evaluate_is_the_same_with_threads(generated_corpora):
    _, dev = generated_corpora
    plan = repeated_kfold(len(dev), k=4, reps=3, seed=2)
    intents = ConstantIntents(dev.utterances[3].intents)

    single = evaluate(dev, plan, intent_predictor=intents)
    threaded = evaluate(dev, plan, intent_predictor=intents, threads=4)
    assert single == threaded
    assert single.slots is None


def test_evaluate_rejects_mismatched_plan(generated_corpora):
    _, dev = generated_corpora
    with pytest.raises(DataError):
        evaluate(dev, repeated_kfold(len(dev) + 1, 5, 1, 0), GoldSlots(dev))
    with pytest.raises(DataError):
        evaluate(dev, repeated_kfold(len(dev), 5, 1, 0))
