from typing import List, NamedTuple, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, model_validator

from src.utils.errors import ConfigError


class FoldPlan(BaseModel):
    """Per repetition, a partition of item indices into k folds"""

    n_items: int
    k: int
    repetitions: int
    seed: int
    assignments: List[List[List[int]]]

    @model_validator(mode="after")
    def _check_partition(self) -> "FoldPlan":
        for rep, folds in enumerate(self.assignments):
            items = sorted(i for fold in folds for i in fold)
            if items != list(range(self.n_items)):
                raise ValueError(f"Repetition {rep} is not a partition of {self.n_items} items")
            sizes = [len(fold) for fold in folds]
            if len(folds) != self.k or max(sizes) - min(sizes) > 1:
                raise ValueError(f"Repetition {rep} has unbalanced folds {sizes}")
        return self

    def folds(self):
        """Yield (repetition, fold number, item indices)"""
        for rep, folds in enumerate(self.assignments):
            for number, fold in enumerate(folds):
                yield rep, number, fold


def repeated_kfold(n_items: int, k: int = 5, reps: int = 10, seed: int = 0) -> FoldPlan:
    """
    Shuffle the items and cut them into k near-equal folds, `reps` times

    The first n % k folds get one extra item.

    Raises:
        ConfigError: If k is not between 1 and n_items, or reps < 1
    """
    if not 1 <= k <= n_items:
        raise ConfigError(f"k must be between 1 and the number of items ({n_items}), got {k}")
    if reps < 1:
        raise ConfigError(f"reps must be >= 1, got {reps}")

    rng = np.random.default_rng(seed)
    assignments = []
    for _ in range(reps):
        order = rng.permutation(n_items)
        assignments.append([sorted(int(i) for i in fold) for fold in np.array_split(order, k)])
    return FoldPlan(n_items=n_items, k=k, repetitions=reps, seed=seed, assignments=assignments)


class Interval(NamedTuple):
    mean: float
    lo: float
    hi: float


def ci95(scores: Sequence[float]) -> Interval:
    """
    Mean with the 2.5th and 97.5th percentiles of the scores (linear interpolation)

    Raises:
        ValueError: If scores is empty
    """
    values = np.asarray(scores, dtype=np.float64)
    if values.size == 0:
        raise ValueError("ci95 needs at least one score")
    if values.size == 1:
        logger.warning("Confidence interval from a single score collapses to that score")
    lo, hi = np.percentile(values, [2.5, 97.5], method="linear")
    return Interval(float(values.mean()), float(lo), float(hi))
