from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional

from loguru import logger
from pydantic import BaseModel

from src.dataset.models import Corpus
from src.evaluation.base import IntentPredictor, SlotPredictor
from src.evaluation.folds import FoldPlan, ci95
from src.evaluation.metrics import IntentScores, ScoreTable, intent_scores, span_f1, token_f1
from src.utils.errors import DataError
from src.utils.files import atomic_write_text, canonical_json


class AggregateScore(BaseModel):
    """Mean and percentile interval of fold scores"""

    mean: float
    lo: float
    hi: float
    fold_scores: List[float]

    @classmethod
    def from_scores(cls, scores: List[float]) -> "AggregateScore":
        interval = ci95(scores)
        return cls(mean=interval.mean, lo=interval.lo, hi=interval.hi, fold_scores=scores)


class SlotReport(BaseModel):
    span: ScoreTable
    token: ScoreTable
    span_folds: AggregateScore
    token_folds: AggregateScore


class IntentReport(BaseModel):
    scores: IntentScores
    macro_folds: AggregateScore
    axis_folds: Dict[str, AggregateScore]


class EvalReport(BaseModel):
    name: str
    n_items: int
    k: int
    repetitions: int
    seed: int
    slots: Optional[SlotReport] = None
    intents: Optional[IntentReport] = None


def evaluate(
    test: Corpus,
    plan: FoldPlan,
    slot_predictor: Optional[SlotPredictor] = None,
    intent_predictor: Optional[IntentPredictor] = None,
    name: str = "model",
    threads: int = 1,
) -> EvalReport:
    """
    Score trained predictors on a test corpus, fold by fold

    Predictions are made once per utterance; every fold of the plan is then scored
    on its own and the fold scores are summarised by their mean and 95% percentile
    interval. Whole-set tables are reported alongside.

    Args:
        test: Test utterances
        plan: Fold plan over the test items
        slot_predictor: Slot tagger to score, if any
        intent_predictor: Intent classifier to score, if any
        name: Label stored in the report
        threads: Folds scored concurrently

    Returns:
        EvalReport: The aggregated report

    Raises:
        DataError: If the plan does not match the test set size or no predictor is given
    """
    if plan.n_items != len(test):
        raise DataError(f"Fold plan covers {plan.n_items} items but the test set has {len(test)}")
    if slot_predictor is None and intent_predictor is None:
        raise DataError("Nothing to evaluate: no slot or intent model given")

    utterances = test.utterances
    report = EvalReport(name=name, n_items=len(test), k=plan.k, repetitions=plan.repetitions, seed=plan.seed)
    folds = [fold for _, _, fold in plan.folds()]

    def _map(fn):
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as executor:
                return list(executor.map(fn, folds))
        return [fn(fold) for fold in folds]

    if slot_predictor is not None:
        predicted = [slot_predictor.predict_slots(u.tokens, u.lemmas, u.pos) for u in utterances]
        gold_spans = [u.spans() for u in utterances]
        gold_tags = [u.slot_tags for u in utterances]

        def _slot_fold(fold):
            span = span_f1([gold_spans[i] for i in fold], [predicted[i][1] for i in fold]).weighted_f1
            token = token_f1([gold_tags[i] for i in fold], [predicted[i][0] for i in fold]).weighted_f1
            return span, token

        fold_scores = _map(_slot_fold)
        report.slots = SlotReport(
            span=span_f1(gold_spans, [p[1] for p in predicted]),
            token=token_f1(gold_tags, [p[0] for p in predicted]),
            span_folds=AggregateScore.from_scores([s for s, _ in fold_scores]),
            token_folds=AggregateScore.from_scores([t for _, t in fold_scores]),
        )
        logger.info(
            f"{name}: slot span F1 {report.slots.span_folds.mean:.4f} "
            f"[{report.slots.span_folds.lo:.4f}-{report.slots.span_folds.hi:.4f}]"
        )

    if intent_predictor is not None:
        axes = list(test.schema.intent_axes)
        predicted_intents = [intent_predictor.predict_intents(u.tokens) for u in utterances]
        gold_intents = [u.intents for u in utterances]

        def _intent_fold(fold):
            return intent_scores([gold_intents[i] for i in fold], [predicted_intents[i] for i in fold], axes)

        fold_scores = _map(_intent_fold)
        report.intents = IntentReport(
            scores=intent_scores(gold_intents, predicted_intents, axes),
            macro_folds=AggregateScore.from_scores([s.macro_f1 for s in fold_scores]),
            axis_folds={
                axis: AggregateScore.from_scores([s.per_axis[axis].weighted_f1 for s in fold_scores])
                for axis in axes
            },
        )
        logger.info(
            f"{name}: intent macro F1 {report.intents.macro_folds.mean:.4f} "
            f"[{report.intents.macro_folds.lo:.4f}-{report.intents.macro_folds.hi:.4f}]"
        )

    return report


def _interval(score: AggregateScore) -> str:
    return f"{score.mean:.2f} [{score.lo:.2f}-{score.hi:.2f}]"


def render_report(report: EvalReport) -> str:
    """Human-readable summary table"""
    lines = [
        f"Evaluation: {report.name}",
        f"Test items: {report.n_items}, {report.repetitions} x {report.k}-fold (seed {report.seed})",
    ]
    if report.slots is not None:
        lines += [
            "",
            "Slots                 F1 (95% CI)",
            f"  span (weighted)     {_interval(report.slots.span_folds)}",
            f"  token (weighted)    {_interval(report.slots.token_folds)}",
            "",
            f"  {'kind':<10} {'P':>6} {'R':>6} {'F1':>6} {'support':>8}",
        ]
        for kind, score in report.slots.span.per_label.items():
            lines.append(
                f"  {kind:<10} {score.precision:>6.2f} {score.recall:>6.2f} {score.f1:>6.2f} {score.support:>8d}"
            )
    if report.intents is not None:
        lines += ["", "Intents               F1 (95% CI)"]
        for axis, score in report.intents.axis_folds.items():
            lines.append(f"  {axis:<19} {_interval(score)}")
        lines.append(f"  {'macro':<19} {_interval(report.intents.macro_folds)}")
    return "\n".join(lines) + "\n"


def save_report(report: EvalReport, path: str | Path) -> str:
    output_path = atomic_write_text(path, canonical_json(report.model_dump()))
    logger.info(f"Wrote evaluation report to {output_path}")
    return output_path
