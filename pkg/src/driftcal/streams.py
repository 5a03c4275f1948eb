"""Synthetic streams and the in-memory stream containers.

Level streams are sampled by inverse CDF through a piecewise-linear
distribution function pinned at the oracle level: a knot at
(alpha_star, alpha) makes P(beta < alpha_star) = alpha exact by
construction, so regret against the oracle is measurable without
estimation error.  Extra knots shape the rest of the law (for example to
force a chosen miscoverage rate on a fixed-level baseline).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .regression import rolling_ols_fit
from .rng import SUB_SIM, SUB_STREAM, make_rng

__all__ = [
    "SegmentSpec",
    "BetaStream",
    "ScoreStream",
    "SeriesStream",
    "PanelData",
    "generate_beta_stream",
    "synthetic_panel",
]


@dataclass(frozen=True)
class SegmentSpec:
    """One stationary stretch of the level stream.

    ``law`` is one of ``warp`` (single knot at (alpha_star, alpha)),
    ``uniform`` (identity CDF; only valid when alpha_star == alpha) and
    ``knots`` (explicit CDF knots, which must include (alpha_star, alpha)).
    """

    length: int
    alpha_star: float
    law: str = "warp"
    knots: tuple[tuple[float, float], ...] | None = None


@dataclass(frozen=True)
class BetaStream:
    t: np.ndarray
    beta: np.ndarray
    alpha_star: np.ndarray | None = None


@dataclass(frozen=True)
class ScoreStream:
    t: np.ndarray
    score: np.ndarray


@dataclass(frozen=True)
class SeriesStream:
    t: np.ndarray
    y: np.ndarray
    point_pred: np.ndarray
    scale: np.ndarray | None = None


@dataclass(frozen=True)
class PanelData:
    t: np.ndarray
    unit: np.ndarray
    y: np.ndarray
    y_hat: np.ndarray
    y_lag: np.ndarray


def _segment_cdf(seg: SegmentSpec, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 < seg.alpha_star < 1.0:
        raise ValueError(f"invalid segment: alpha_star must lie in (0, 1), got {seg.alpha_star}")
    if seg.length < 1:
        raise ValueError(f"invalid segment: length must be >= 1, got {seg.length}")
    if seg.law == "uniform":
        if seg.alpha_star != alpha:
            raise ValueError("uniform law pins the oracle level to the target: alpha_star must equal alpha")
        knots: list[tuple[float, float]] = []
    elif seg.law == "warp":
        knots = [(seg.alpha_star, alpha)]
    elif seg.law == "knots":
        if not seg.knots:
            raise ValueError("law 'knots' needs explicit CDF knots")
        knots = [(float(x), float(p)) for x, p in seg.knots]
        if not any(abs(x - seg.alpha_star) == 0.0 and abs(p - alpha) == 0.0 for x, p in knots):
            raise ValueError("knots must pin P(beta < alpha_star) = alpha, include the knot (alpha_star, alpha)")
    else:
        raise ValueError(f"unknown segment law {seg.law!r}")
    xs = np.array([0.0] + [x for x, _ in knots] + [1.0])
    ps = np.array([0.0] + [p for _, p in knots] + [1.0])
    if np.any(np.diff(xs) <= 0.0) or np.any(np.diff(ps) <= 0.0):
        raise ValueError("CDF knots must be strictly increasing in both coordinates inside (0, 1)")
    return xs, ps


def generate_beta_stream(
    segments: list[SegmentSpec] | tuple[SegmentSpec, ...],
    alpha: float,
    seed: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample a realized-level stream; returns (betas, oracle levels)."""
    if not segments:
        raise ValueError("need at least one segment")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"target level must lie in (0, 1), got {alpha}")
    rng = make_rng(seed, SUB_STREAM)
    betas = []
    stars = []
    for seg in segments:
        xs, ps = _segment_cdf(seg, alpha)
        u = rng.random(seg.length)
        betas.append(np.interp(u, ps, xs))
        stars.append(np.full(seg.length, seg.alpha_star))
    return np.concatenate(betas), np.concatenate(stars)


def synthetic_panel(
    n_units: int,
    length: int,
    seed: int = 0,
    *,
    fit_window: int = 15,
    ar_coef: float = 0.8,
    noise: float = 0.5,
) -> PanelData:
    """A small cross-section of AR(1) series with rolling least-squares forecasts.

    Each unit's next value is predicted from [1, own lag, common-factor lag]
    refit every step on the trailing window, which is how the panel CSV
    schema (t, unit, y, y_hat, y_lag) is meant to be produced.
    """
    if n_units < 2:
        raise ValueError("a panel needs at least 2 units")
    if length <= fit_window + 2:
        raise ValueError(f"length must exceed fit_window + 2 = {fit_window + 2}")
    rng = make_rng(seed, SUB_SIM)
    f = np.empty(length)
    f[0] = rng.standard_normal()
    for t in range(1, length):
        f[t] = 0.9 * f[t - 1] + 0.3 * rng.standard_normal()
    y = np.empty((n_units, length))
    const = rng.uniform(5.0, 15.0, size=n_units)
    for i in range(n_units):
        y[i, 0] = const[i]
        e = rng.standard_normal(length) * noise
        for t in range(1, length):
            y[i, t] = const[i] * (1.0 - ar_coef) + ar_coef * y[i, t - 1] + 0.4 * f[t - 1] + e[t]

    width = len(str(n_units - 1))
    rows_t, rows_u, rows_y, rows_hat, rows_lag = [], [], [], [], []
    names = [f"u{i:0{width}d}" for i in range(n_units)]
    for t in range(fit_window + 1, length):
        for i in range(n_units):
            lo = t - fit_window
            X = np.column_stack(
                [np.ones(fit_window), y[i, lo - 1 : t - 1], f[lo - 1 : t - 1]]
            )
            model = rolling_ols_fit(X, y[i, lo:t], features=("const", "y_lag1", "factor_lag1"))
            rows_t.append(t)
            rows_u.append(names[i])
            rows_y.append(y[i, t])
            rows_hat.append(model.predict(np.array([1.0, y[i, t - 1], f[t - 1]])))
            rows_lag.append(y[i, t - 1])
    return PanelData(
        t=np.array(rows_t, dtype=np.int64),
        unit=np.array(rows_u, dtype=object),
        y=np.array(rows_y),
        y_hat=np.array(rows_hat),
        y_lag=np.array(rows_lag),
    )
