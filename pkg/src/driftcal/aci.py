"""Single-step-size online level tracking.

The tracker holds a working level alpha_t, flags an error whenever the
realized level falls strictly below it, and moves by a fixed step:

    alpha_{t+1} = alpha_t + gamma (alpha - err_t)

which is exactly online subgradient descent on the pinball loss
l(beta_t, theta) at theta = alpha_t.  The iterate stays inside
[-gamma, 1 + gamma] for any beta stream in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .conformal import TargetLevel

__all__ = ["AciState", "aci_step", "run_aci"]


@dataclass(frozen=True, slots=True)
class AciState:
    alpha_t: float
    gamma: float
    target: TargetLevel

    def __post_init__(self) -> None:
        if self.gamma < 0.0:
            raise ValueError(f"step size must be nonnegative, got {self.gamma}")


def aci_step(state: AciState, err: float) -> AciState:
    """Advance the tracker by one observed error indicator (0.0 or 1.0 exactly)."""
    if err != 0.0 and err != 1.0:
        raise ValueError(f"err must be exactly 0.0 or 1.0, got {err}")
    return replace(state, alpha_t=state.alpha_t + state.gamma * (state.target.alpha - err))


def run_aci(
    betas: np.ndarray,
    gamma: float,
    alpha: float,
    alpha_init: float | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run the tracker over a realized-level stream.

    Returns ``(alphas, errs)`` aligned with the input: ``alphas[t]`` is the
    level in force when ``betas[t]`` arrived and ``errs[t] = 1{betas[t] <
    alphas[t]}``.  Rejects levels outside [0, 1].
    """
    target = TargetLevel(alpha)
    if gamma < 0.0:
        raise ValueError(f"step size must be nonnegative, got {gamma}")
    b = np.asarray(betas, dtype=np.float64)
    if b.ndim != 1:
        raise ValueError("beta stream must be one-dimensional")
    if b.size and (b.min() < 0.0 or b.max() > 1.0):
        raise ValueError("realized levels must lie in [0, 1]")
    a = alpha if alpha_init is None else float(alpha_init)
    alphas = np.empty(b.size)
    errs = np.empty(b.size)
    for t in range(b.size):
        err = 1.0 if b[t] < a else 0.0
        alphas[t] = a
        errs[t] = err
        a = a + gamma * (alpha - err)
    return alphas, errs
