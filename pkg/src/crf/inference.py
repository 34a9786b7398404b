"""
Linear-chain inference over an emission matrix E (T x L) and transitions A (L x L)

A[i, j] scores moving from label i at t-1 to label j at t. All quantities are in
log space.
"""

from typing import List, NamedTuple, Sequence

import numpy as np


def logsumexp(x: np.ndarray, axis: int | None = None) -> np.ndarray:
    peak = np.max(x, axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    out = np.log(np.sum(np.exp(x - peak), axis=axis, keepdims=True)) + peak
    return np.squeeze(out, axis=axis) if axis is not None else out.reshape(())


def forward(E: np.ndarray, A: np.ndarray) -> np.ndarray:
    alpha = np.empty_like(E)
    alpha[0] = E[0]
    for t in range(1, len(E)):
        alpha[t] = logsumexp(alpha[t - 1][:, None] + A, axis=0) + E[t]
    return alpha


def backward(E: np.ndarray, A: np.ndarray) -> np.ndarray:
    beta = np.zeros_like(E)
    for t in range(len(E) - 2, -1, -1):
        beta[t] = logsumexp(A + (E[t + 1] + beta[t + 1])[None, :], axis=1)
    return beta


def log_partition(E: np.ndarray, A: np.ndarray) -> float:
    return float(logsumexp(forward(E, A)[-1]))


def path_score(E: np.ndarray, A: np.ndarray, tags: Sequence[int]) -> float:
    tags = np.asarray(tags)
    score = E[np.arange(len(tags)), tags].sum()
    if len(tags) > 1:
        score += A[tags[:-1], tags[1:]].sum()
    return float(score)


class Marginals(NamedTuple):
    log_z: float
    unary: np.ndarray     # T x L
    pairwise: np.ndarray  # (T-1) x L x L


def marginals(E: np.ndarray, A: np.ndarray) -> Marginals:
    """Per-position and per-transition posterior marginals via forward-backward"""
    alpha = forward(E, A)
    beta = backward(E, A)
    log_z = float(logsumexp(alpha[-1]))
    unary = np.exp(alpha + beta - log_z)
    pairwise = np.exp(
        alpha[:-1, :, None] + A[None, :, :] + (E[1:] + beta[1:])[:, None, :] - log_z
    )
    return Marginals(log_z, unary, pairwise)


def viterbi(E: np.ndarray, A: np.ndarray) -> List[int]:
    """
    Highest-scoring label path

    Ties go to the lower label index, both at each backpointer and at the final
    position (np.argmax returns the first maximum).
    """
    T, L = E.shape
    delta = E[0].copy()
    back = np.zeros((T, L), dtype=np.int64)
    for t in range(1, T):
        scores = delta[:, None] + A
        back[t] = np.argmax(scores, axis=0)
        delta = scores[back[t], np.arange(L)] + E[t]

    path = [int(np.argmax(delta))]
    for t in range(T - 1, 0, -1):
        path.append(int(back[t][path[-1]]))
    return path[::-1]


class ChainGrad(NamedTuple):
    nll: float
    d_emissions: np.ndarray
    d_transitions: np.ndarray


def chain_nll_grad(E: np.ndarray, A: np.ndarray, tags: Sequence[int]) -> ChainGrad:
    """
    Negative log-likelihood of a gold path and its gradient w.r.t. E and A

    The gradient is expected minus observed counts.
    """
    tags = np.asarray(tags, dtype=np.int64)
    m = marginals(E, A)
    nll = m.log_z - path_score(E, A, tags)

    d_e = m.unary.copy()
    d_e[np.arange(len(tags)), tags] -= 1.0

    d_a = m.pairwise.sum(axis=0) if len(tags) > 1 else np.zeros_like(A)
    if len(tags) > 1:
        np.add.at(d_a, (tags[:-1], tags[1:]), -1.0)
    return ChainGrad(float(nll), d_e, d_a)
