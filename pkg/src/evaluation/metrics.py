from collections import Counter
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from pydantic import BaseModel

from src.dataset.bio import SlotSpan


class LabelScore(BaseModel):
    precision: float
    recall: float
    f1: float
    support: int


class ScoreTable(BaseModel):
    """Per-label scores and their support-weighted F1"""

    per_label: Dict[str, LabelScore]
    weighted_f1: float


class IntentScores(BaseModel):
    per_axis: Dict[str, ScoreTable]
    macro_f1: float


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def score_counts(tp: Mapping[str, int], predicted: Mapping[str, int], gold: Mapping[str, int]) -> ScoreTable:
    """
    Build a score table from true-positive, predicted and gold counts per label

    Labels with zero gold and zero predicted count are left out. Empty denominators
    give 0. With no gold items at all the weighted F1 is 1.0 when nothing was
    predicted either, otherwise 0.0.
    """
    labels = sorted(label for label in set(gold) | set(predicted) if gold.get(label, 0) or predicted.get(label, 0))
    per_label: Dict[str, LabelScore] = {}
    for label in labels:
        hits = tp.get(label, 0)
        p = _ratio(hits, predicted.get(label, 0))
        r = _ratio(hits, gold.get(label, 0))
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        per_label[label] = LabelScore(precision=p, recall=r, f1=f1, support=gold.get(label, 0))

    total = sum(gold.values())
    if total == 0:
        weighted = 0.0 if sum(predicted.values()) else 1.0
    else:
        weighted = sum(s.f1 * s.support for s in per_label.values()) / total
    return ScoreTable(per_label=per_label, weighted_f1=weighted)


def span_f1(gold: Sequence[Iterable[SlotSpan]], predicted: Sequence[Iterable[SlotSpan]]) -> ScoreTable:
    """
    Exact-match span scores per slot kind

    Args:
        gold: Gold spans, one collection per utterance
        predicted: Predicted spans, aligned with gold

    Returns:
        ScoreTable: Per-kind scores weighted by gold span count
    """
    if len(gold) != len(predicted):
        raise ValueError(f"Got {len(gold)} gold and {len(predicted)} predicted utterances")
    tp, pred_counts, gold_counts = Counter(), Counter(), Counter()
    for gold_spans, pred_spans in zip(gold, predicted):
        g = set(gold_spans)
        p = set(pred_spans)
        gold_counts.update(s.kind for s in g)
        pred_counts.update(s.kind for s in p)
        tp.update(s.kind for s in g & p)
    return score_counts(tp, pred_counts, gold_counts)


def _flatten(sequences: Sequence) -> List[str]:
    if sequences and isinstance(sequences[0], str):
        return list(sequences)
    return [tag for seq in sequences for tag in seq]


def token_f1(gold: Sequence, predicted: Sequence, exclude_o: bool = False) -> ScoreTable:
    """
    Per-tag scores over aligned tokens

    Accepts either flat tag lists or one tag list per utterance.
    """
    gold_tags = _flatten(gold)
    pred_tags = _flatten(predicted)
    if len(gold_tags) != len(pred_tags):
        raise ValueError(f"Tag count mismatch: {len(gold_tags)} gold vs {len(pred_tags)} predicted")
    return _multiclass(gold_tags, pred_tags, ignore={"O"} if exclude_o else set())


def _multiclass(gold: Sequence[str], predicted: Sequence[str], ignore: set = frozenset()) -> ScoreTable:
    tp, pred_counts, gold_counts = Counter(), Counter(), Counter()
    for g, p in zip(gold, predicted):
        if g not in ignore:
            gold_counts[g] += 1
        if p not in ignore:
            pred_counts[p] += 1
        if g == p and g not in ignore:
            tp[g] += 1
    return score_counts(tp, pred_counts, gold_counts)


def intent_scores(
    gold: Sequence[Mapping[str, str]],
    predicted: Sequence[Mapping[str, str]],
    axes: Optional[Sequence[str]] = None,
) -> IntentScores:
    """Weighted F1 per intent axis and their unweighted mean"""
    if len(gold) != len(predicted):
        raise ValueError(f"Got {len(gold)} gold and {len(predicted)} predicted utterances")
    axes = list(axes) if axes is not None else (list(gold[0]) if gold else [])
    per_axis = {axis: _multiclass([g[axis] for g in gold], [p[axis] for p in predicted]) for axis in axes}
    macro = sum(t.weighted_f1 for t in per_axis.values()) / len(per_axis) if per_axis else 0.0
    return IntentScores(per_axis=per_axis, macro_f1=macro)


def accuracy(gold: Sequence, predicted: Sequence) -> float:
    gold_tags = _flatten(gold)
    pred_tags = _flatten(predicted)
    pairs: List[Tuple[str, str]] = list(zip(gold_tags, pred_tags))
    return sum(g == p for g, p in pairs) / len(pairs) if pairs else 0.0
