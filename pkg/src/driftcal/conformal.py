"""Rolling-window conformal machinery.

A prediction set at miscoverage level ``alpha`` keeps every candidate whose
conformity score lies at or below the empirical ``(1-alpha)``-quantile of the
scores currently held in a bounded FIFO window.  The realized level

    beta = sup{ b : score <= Quantile(1 - b, window) }

equals the fraction of stored scores >= score, and is the one-number summary
the online learners consume.  Quantile conventions: Quantile(tau) = +inf for
tau >= 1 and -inf for tau <= 0, so a level alpha <= 0 always covers and
alpha >= 1 never does.  The empirical quantile is the ceil(tau * n)-th order
statistic (lower order-statistic convention).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np
from sortedcontainers import SortedList

__all__ = [
    "TargetLevel",
    "ScoreWindow",
    "PredictionInterval",
    "empirical_quantile",
    "compute_beta",
    "set_membership",
    "interval_from_quantile",
    "pinball_loss",
    "pinball_subgradient",
]


@dataclass(frozen=True, slots=True)
class TargetLevel:
    """Nominal miscoverage level, constrained to the open unit interval."""

    alpha: float

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha < 1.0):
            raise ValueError(f"target level must satisfy 0 < alpha < 1, got {self.alpha}")


class ScoreWindow:
    """Bounded FIFO multiset of conformity scores with O(log W) rank queries.

    Insertion past capacity evicts the oldest score.  Rank and order-statistic
    queries go through a sorted index so a full pass over the window is never
    needed; duplicates are kept with multiplicity.
    """

    __slots__ = ("capacity", "_fifo", "_sorted")

    def __init__(self, capacity: int, values: Iterable[float] = ()) -> None:
        if capacity < 1:
            raise ValueError(f"window capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self._fifo: deque = deque()
        self._sorted: SortedList = SortedList()
        for v in values:
            self.push(v)

    def push(self, score: float) -> None:
        score = float(score)
        if not math.isfinite(score):
            raise ValueError(f"scores must be finite, got {score}")
        if len(self._fifo) == self.capacity:
            self._sorted.remove(self._fifo.popleft())
        self._fifo.append(score)
        self._sorted.add(score)

    def __len__(self) -> int:
        return len(self._fifo)

    def __iter__(self):
        # arrival order
        return iter(self._fifo)

    @property
    def is_full(self) -> bool:
        return len(self._fifo) == self.capacity

    def order_statistic(self, k: int) -> float:
        """k-th smallest stored score, 1-indexed."""
        if not 1 <= k <= len(self._fifo):
            raise IndexError(f"order statistic {k} out of range for window of size {len(self._fifo)}")
        return self._sorted[k - 1]

    def count_geq(self, score: float) -> int:
        """Number of stored scores >= score (ties included)."""
        return len(self._sorted) - self._sorted.bisect_left(score)


WindowLike = Union[ScoreWindow, Sequence[float], np.ndarray]


def _as_sorted_array(window: WindowLike) -> np.ndarray:
    if isinstance(window, ScoreWindow):
        raise TypeError("internal: ScoreWindow handled separately")
    arr = np.asarray(window, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("score window must be one-dimensional")
    return np.sort(arr)


def empirical_quantile(tau: float, window: WindowLike) -> float:
    """Empirical tau-quantile of the stored scores.

    Returns +inf for tau >= 1 and -inf for tau <= 0 regardless of window
    contents; otherwise the ceil(tau * n)-th order statistic.  An empty
    window has no finite quantile and raises.
    """
    if tau >= 1.0:
        return math.inf
    if tau <= 0.0:
        return -math.inf
    if isinstance(window, ScoreWindow):
        n = len(window)
        if n == 0:
            raise ValueError("empty score window has no finite quantile")
        return window.order_statistic(math.ceil(tau * n))
    arr = _as_sorted_array(window)
    n = arr.size
    if n == 0:
        raise ValueError("empty score window has no finite quantile")
    return float(arr[math.ceil(tau * n) - 1])


def compute_beta(score: float, window: WindowLike) -> float:
    """Realized miscoverage level: fraction of stored scores >= score.

    This is the supremum of levels b at which the score would still be
    inside the level-b prediction set (the sup itself is generally not
    attained; learners therefore flag an error via strict comparison
    beta < alpha).
    """
    if isinstance(window, ScoreWindow):
        n = len(window)
        if n == 0:
            raise ValueError("empty score window")
        return window.count_geq(score) / n
    arr = _as_sorted_array(window)
    n = arr.size
    if n == 0:
        raise ValueError("empty score window")
    return float(n - np.searchsorted(arr, score, side="left")) / n


def set_membership(score: float, alpha: float, window: WindowLike) -> bool:
    """Whether the score falls inside the level-alpha prediction set."""
    return score <= empirical_quantile(1.0 - alpha, window)


class PredictionInterval(NamedTuple):
    lo: float
    hi: float

    @property
    def width(self) -> float:
        return self.hi - self.lo


def interval_from_quantile(
    point: float,
    q: float,
    score_kind: str,
    aux: float | None = None,
) -> PredictionInterval:
    """Invert a conformity-score threshold into an interval around a point forecast.

    ``absolute`` scores |y - point| give [point - q, point + q]; ``normalized``
    scores |y - point| / point give [point (1 - q), point (1 + q)] and require
    point > 0; ``relative`` scores |point - y| / |aux - y| solve the inequality
    exactly, which is a bounded interval only for q < 1 (endpoints
    (point -/+ q aux) / (1 -/+ q), ordered).  An infinite q from the quantile
    convention yields an infinite interval for the first two kinds and is
    rejected for relative scores.
    """
    if q < 0.0:
        raise ValueError(f"score quantile must be nonnegative, got {q}")
    if score_kind == "absolute":
        return PredictionInterval(point - q, point + q)
    if score_kind == "normalized":
        if not point > 0.0:
            raise ValueError(f"normalized intervals need a positive point forecast, got {point}")
        return PredictionInterval(point * (1.0 - q), point * (1.0 + q))
    if score_kind == "relative":
        if aux is None:
            raise ValueError("relative intervals need the auxiliary reference value")
        if q >= 1.0:
            raise ValueError(f"unbounded relative set: quantile {q} >= 1")
        a = (point - q * aux) / (1.0 - q)
        b = (point + q * aux) / (1.0 + q)
        return PredictionInterval(min(a, b), max(a, b))
    raise ValueError(f"unknown score kind {score_kind!r}")


def pinball_loss(beta: float, theta: float, alpha: float) -> float:
    """Pinball loss of a proposed level theta against realized level beta.

    l(beta, theta) = alpha (beta - theta) - min{0, beta - theta}; convex and
    piecewise linear in theta with minimum on the alpha-quantile.
    """
    d = beta - theta
    return alpha * d - min(0.0, d)


def pinball_subgradient(beta: float, theta: float, alpha: float) -> float:
    """Subgradient of the pinball loss in theta; -alpha on the boundary beta == theta."""
    return -alpha + (1.0 if beta < theta else 0.0)
