from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, List, NamedTuple, Optional

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

EMBEDDING_DIMS = (50, 100, 300)
HIDDEN_SIZES = (64, 128, 256)
DROPOUTS = (0.1, 0.2, 0.3, 0.4, 0.5)
KERNEL_SIZES = (2, 3, 4, 5)
FILTER_COUNTS = (50, 100, 150, 200, 250)


class GridPoint(BaseModel):
    """One hyperparameter setting for the neural taggers and intent classifiers"""

    model_config = ConfigDict(frozen=True)

    embedding_dim: int = Field(100, ge=1)
    hidden: int = Field(64, ge=1)
    layers: int = Field(1, ge=1, le=2)
    dropout_embedding: float = Field(0.1, ge=0.0, lt=1.0)
    dropout_hidden: float = Field(0.1, ge=0.0, lt=1.0)
    kernel: int = Field(3, ge=1)
    filters: int = Field(100, ge=1)
    lr: float = Field(0.005, gt=0.0)
    epochs: int = Field(10, ge=0)
    batch_size: int = Field(16, ge=1)
    patience: int = Field(3, ge=0)


def sample_grid(seed: int, n: int, base: Optional[GridPoint] = None) -> List[GridPoint]:
    """
    Draw n grid points

    Embedding size, hidden size, dropout rates, kernel size, filter count and
    depth are sampled; the remaining fields come from `base`.
    """
    rng = np.random.default_rng(seed)
    base = base or GridPoint()
    points = []
    for _ in range(n):
        points.append(
            base.model_copy(
                update={
                    "embedding_dim": int(rng.choice(EMBEDDING_DIMS)),
                    "hidden": int(rng.choice(HIDDEN_SIZES)),
                    "layers": int(rng.integers(1, 3)),
                    "dropout_embedding": float(rng.choice(DROPOUTS)),
                    "dropout_hidden": float(rng.choice(DROPOUTS)),
                    "kernel": int(rng.choice(KERNEL_SIZES)),
                    "filters": int(rng.choice(FILTER_COUNTS)),
                }
            )
        )
    return points


class SearchResult(NamedTuple):
    point: GridPoint
    seed: int
    score: float
    model: Any


def random_search(
    train_fn: Callable[[GridPoint, int], Any],
    score_fn: Callable[[Any], float],
    n: int,
    seed: int,
    base: Optional[GridPoint] = None,
    threads: int = 1,
) -> List[SearchResult]:
    """
    Train one model per sampled grid point and rank them by dev score

    Each point gets its own seed derived from `seed`, so parallel runs share no
    random state. Results are sorted best first; ties keep sampling order.

    Args:
        train_fn: Trains a model for (grid point, seed)
        score_fn: Dev score of a trained model (higher is better)
        n: Number of grid points
        seed: Seed for sampling points and per-point seeds
        base: Fixed fields of every point
        threads: Grid points trained concurrently

    Returns:
        List[SearchResult]: All trained points, best first
    """
    points = sample_grid(seed, n, base)
    point_seeds = [int(s) for s in np.random.default_rng([seed, 1]).integers(0, 2 ** 31, size=n)]

    def _run(job) -> SearchResult:
        point, point_seed = job
        model = train_fn(point, point_seed)
        score = score_fn(model)
        logger.info(f"Grid point {point.model_dump()} -> dev score {score:.4f}")
        return SearchResult(point, point_seed, score, model)

    jobs = list(zip(points, point_seeds))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as executor:
            results = list(executor.map(_run, jobs))
    else:
        results = [_run(job) for job in jobs]

    ranked = sorted(range(len(results)), key=lambda i: -results[i].score)
    return [results[i] for i in ranked]
