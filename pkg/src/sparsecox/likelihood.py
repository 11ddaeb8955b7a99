"""Cox log partial likelihood, score and information via risk-set sweeps.

All risk-set sums are formed by one cumulative sweep over subjects sorted by
decreasing time; the risk set of an event is the prefix ending at the last
subject tied with it (``Dataset.rs_end``).  Exponentials are taken after
subtracting the running maximum of the linear predictor over the prefix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .survival import MAX_EXP_ARG, Dataset


@dataclass(frozen=True)
class MomentSet:
    s0: float
    s1: np.ndarray | None
    s2: np.ndarray | None
    at_event: int


def _beta(data: Dataset, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape[0] != data.p:
        raise ValueError(f"beta has length {beta.shape[0]}, expected {data.p}")
    return beta


def moments(data: Dataset, beta, event_index: int, order: int = 2) -> MomentSet:
    """``S^(l)_n(beta, t_j) = n^-1 sum_{i in R_j} X_i^{(x)l} exp(beta'X_i)``.

    ``event_index`` is zero-based into ``data.event_order``.
    """
    beta = _beta(data, beta)
    if not 0 <= event_index < data.N:
        raise IndexError(f"event_index {event_index} out of range [0, {data.N})")
    if order not in (0, 1, 2):
        raise ValueError("order must be 0, 1 or 2")
    R = data.risk_set(event_index)
    XR = data.X[R]
    eta = XR @ beta
    if np.any(eta > MAX_EXP_ARG):
        i = int(R[np.argmax(eta)])
        raise FloatingPointError(f"exp overflow at subject {i}: linear predictor {eta.max()!r}")
    w = np.exp(eta)
    n = data.n
    s0 = w.sum() / n
    s1 = (w @ XR) / n if order >= 1 else None
    s2 = (XR.T * w) @ XR / n if order >= 2 else None
    return MomentSet(s0, s1, s2, event_index)


def log_partial_likelihood(data: Dataset, beta) -> float:
    """``Q_n(beta) = sum_j {beta'X_(j) - log sum_{i in R_j} exp(beta'X_i)}``."""
    beta = _beta(data, beta)
    if data.N == 0:
        return 0.0
    q = _kernels.partial_loglik(data.Xs @ beta, data.ds, data.rs_end)
    if not np.isfinite(q):
        raise FloatingPointError("log partial likelihood is not finite")
    return float(q)


def score(data: Dataset, beta) -> np.ndarray:
    """Gradient of ``Q_n``: ``sum_j (X_(j) - E_n(beta, t_j))``."""
    beta = _beta(data, beta)
    if data.N == 0:
        return np.zeros(data.p)
    xi = _kernels.score_all(data.Xs, data.Xs @ beta, data.ds, data.rs_end)
    if not np.all(np.isfinite(xi)):
        raise FloatingPointError("score is not finite")
    return xi


def _block(data: Dataset, block) -> np.ndarray:
    if block is None:
        return np.arange(data.p)
    block = np.atleast_1d(np.asarray(block, dtype=np.int64))
    if block.size == 0:
        raise ValueError("block must be nonempty")
    if block.min() < 0 or block.max() >= data.p:
        raise IndexError("block index out of range")
    return block


def v_matrix(data: Dataset, beta, event_index: int, block=None) -> np.ndarray:
    """Weighted covariance of ``X[:, block]`` over the risk set of one event.

    Weights are proportional to ``exp(beta'X_i)`` on ``R_j``.
    """
    beta = _beta(data, beta)
    block = _block(data, block)
    if not 0 <= event_index < data.N:
        raise IndexError(f"event_index {event_index} out of range [0, {data.N})")
    R = data.risk_set(event_index)
    if R.size == 0:
        raise ValueError("empty risk set")
    eta = data.X[R] @ beta
    w = np.exp(eta - eta.max())
    w /= w.sum()
    XB = data.X[np.ix_(R, block)]
    mu = w @ XB
    D = XB - mu
    V = (D.T * w) @ D
    return 0.5 * (V + V.T)


def information(data: Dataset, beta, block=None) -> np.ndarray:
    """``n^-1 sum_j V(beta, t_j)`` restricted to ``block`` (= ``-n^-1`` Hessian of ``Q_n``)."""
    beta = _beta(data, beta)
    block = _block(data, block)
    b = block.size
    if data.N == 0:
        return np.zeros((b, b))
    XB = data.Xs[:, block]
    XB = np.ascontiguousarray(XB - XB.mean(axis=0))  # translation invariant; limits cancellation
    H = _kernels.info_sum(XB, data.Xs @ beta, data.ds, data.rs_end)
    return 0.5 * (H + H.T) / data.n
