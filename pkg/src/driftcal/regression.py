"""Rolling least-squares point forecasts and the relative conformity score."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["OlsModel", "rolling_ols_fit", "panel_score"]


@dataclass(frozen=True)
class OlsModel:
    """Least-squares coefficients plus the layout of the design they expect.

    ``features`` names the design columns (for bookkeeping only; prediction
    is a plain dot product).  ``rank_deficient`` marks windows where the
    design lost rank and the minimal-norm solution was taken.
    """

    coef: np.ndarray
    features: tuple[str, ...]
    rank: int
    rank_deficient: bool

    def predict(self, row: np.ndarray) -> float:
        x = np.asarray(row, dtype=np.float64)
        if x.shape != self.coef.shape:
            raise ValueError(f"design row has shape {x.shape}, expected {self.coef.shape}")
        return float(x @ self.coef)


def rolling_ols_fit(
    rows: np.ndarray,
    targets: np.ndarray,
    features: tuple[str, ...] | None = None,
) -> OlsModel:
    """Least squares on a window of design rows via SVD.

    Rank-deficient designs get the minimal-norm solution and are flagged
    rather than rejected; short windows (fewer rows than columns) are
    treated the same way.
    """
    X = np.asarray(rows, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.size or X.shape[0] == 0:
        raise ValueError("need a nonempty 2-d design with one target per row")
    if features is None:
        features = tuple(f"x{j}" for j in range(X.shape[1]))
    elif len(features) != X.shape[1]:
        raise ValueError(f"{len(features)} feature names for {X.shape[1]} columns")
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    return OlsModel(
        coef=coef,
        features=tuple(features),
        rank=int(rank),
        rank_deficient=int(rank) < X.shape[1],
    )


def panel_score(y: float, y_hat: float, y_lag: float) -> float:
    """Relative conformity score |y_hat - y| / |y_lag - y|.

    Undefined when the lagged value equals the realized one; callers skip
    and count such rows.
    """
    denom = abs(y_lag - y)
    if denom == 0.0:
        raise ZeroDivisionError("zero denominator: lagged value equals the realized value")
    return abs(y_hat - y) / denom
