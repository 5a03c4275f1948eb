"""Closed-form evaluators for the aggregation guarantees.

Two finite-sample bounds and one distributional identity, each evaluated
exactly as stated so experiments can place realized quantities next to
their guaranteed ceilings:

* dynamic regret of the weighted ensemble against a drifting oracle level,
  per interval of a fixed length;
* long-run deviation of the error frequency from the target under the
  decaying schedule;
* the expectation gap of the pinball loss between an arbitrary level and
  the exact quantile level, for discrete level distributions.

The evaluators do no estimation; every input is supplied by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conformal import pinball_loss

__all__ = [
    "RegretBoundInputs",
    "path_length",
    "dynamic_regret_bound",
    "long_term_coverage_bound",
    "empirical_dynamic_regret",
    "pinball_gap",
]


@dataclass(frozen=True, slots=True)
class RegretBoundInputs:
    """Inputs to :func:`dynamic_regret_bound`.

    ``sum_sq_losses`` is the (expected or realized) sum of squared pinball
    losses over the interval; ``path_length`` the total variation of the
    oracle level inside it; ``gamma_min`` the smallest step size in the
    grid and ``gamma_max`` the largest.
    """

    interval_length: int
    k: int
    sigma: float
    eta: float
    sum_sq_losses: float
    path_length: float
    gamma_max: float
    gamma_min: float


def path_length(alphas: np.ndarray) -> float:
    """Total variation sum |alpha_t - alpha_{t-1}| of a level sequence."""
    a = np.asarray(alphas, dtype=np.float64)
    if a.size < 1:
        raise ValueError("path length needs at least one level")
    return float(np.abs(np.diff(a)).sum())


def dynamic_regret_bound(inputs: RegretBoundInputs) -> float:
    """Per-interval dynamic-regret ceiling for the weighted ensemble.

    (log(k/sigma) + 2 sigma L) / (eta L) + (eta / L) sum_sq
    + 2 sqrt(3) (1 + gamma_max)^2 max{ sqrt((path + 1) / L), gamma_min }
    """
    L = inputs.interval_length
    if L < 1 or inputs.k < 1:
        raise ValueError("hypotheses violated: interval_length and k must be >= 1")
    if not 0.0 < inputs.sigma <= 0.5:
        raise ValueError(f"hypotheses violated: sigma must lie in (0, 1/2], got {inputs.sigma}")
    if inputs.eta <= 0.0:
        raise ValueError(f"hypotheses violated: eta must be positive, got {inputs.eta}")
    if inputs.sum_sq_losses < 0.0 or inputs.path_length < 0.0:
        raise ValueError("hypotheses violated: losses and path length are nonnegative")
    if not 0.0 < inputs.gamma_min <= inputs.gamma_max:
        raise ValueError("hypotheses violated: need 0 < gamma_min <= gamma_max")
    t1 = (np.log(inputs.k / inputs.sigma) + 2.0 * inputs.sigma * L) / (inputs.eta * L)
    t2 = (inputs.eta / L) * inputs.sum_sq_losses
    t3 = (
        2.0
        * np.sqrt(3.0)
        * (1.0 + inputs.gamma_max) ** 2
        * max(np.sqrt((inputs.path_length + 1.0) / L), inputs.gamma_min)
    )
    return float(t1 + t2 + t3)


def long_term_coverage_bound(
    T: int,
    gamma_min: float,
    gamma_max: float,
    etas: np.ndarray,
    sigmas: np.ndarray,
) -> float:
    """Ceiling on |error frequency - target| under per-step schedules.

    (1 + 2 gmax) / (T gmin)
    + ((1 + 2 gmax)^2 / gmin) (1/T) sum_t exp(eta_t (1 + 2 gmax)) eta_t
    + 2 ((1 + gmax) / gmin) (1/T) sum_t sigma_t

    The exponential sits inside the time average, applied per step.
    """
    etas = np.asarray(etas, dtype=np.float64)
    sigmas = np.asarray(sigmas, dtype=np.float64)
    if T < 1 or etas.shape != (T,) or sigmas.shape != (T,):
        raise ValueError("hypotheses violated: etas and sigmas must both have length T >= 1")
    if not 0.0 < gamma_min <= gamma_max:
        raise ValueError("hypotheses violated: need 0 < gamma_min <= gamma_max")
    if etas.min() < 0.0:
        raise ValueError("hypotheses violated: learning rates must be nonnegative")
    if sigmas.min() < 0.0 or sigmas.max() > 0.5:
        raise ValueError("hypotheses violated: mixing floors must lie in [0, 1/2]")
    g = 1.0 + 2.0 * gamma_max
    t1 = g / (T * gamma_min)
    t2 = (g**2 / gamma_min) * float(np.mean(np.exp(etas * g) * etas))
    t3 = 2.0 * ((1.0 + gamma_max) / gamma_min) * float(np.mean(sigmas))
    return float(t1 + t2 + t3)


def empirical_dynamic_regret(
    betas: np.ndarray,
    outputs: np.ndarray,
    oracle_alphas: np.ndarray,
    alpha: float,
    interval: tuple[int, int] | None = None,
) -> float:
    """Average realized pinball-loss excess over the oracle level sequence.

    ``interval`` is an inclusive pair of 0-based indices; default is the
    whole stream.
    """
    b = np.asarray(betas, dtype=np.float64)
    out = np.asarray(outputs, dtype=np.float64)
    orc = np.asarray(oracle_alphas, dtype=np.float64)
    if not (b.shape == out.shape == orc.shape) or b.ndim != 1 or b.size == 0:
        raise ValueError("betas, outputs and oracle levels must be equal-length nonempty vectors")
    if interval is None:
        r, s = 0, b.size - 1
    else:
        r, s = interval
        if not 0 <= r <= s < b.size:
            raise ValueError(f"interval {interval} out of range for length {b.size}")
    sl = slice(r, s + 1)
    d = b[sl] - out[sl]
    loss_out = alpha * d - np.minimum(0.0, d)
    d = b[sl] - orc[sl]
    loss_orc = alpha * d - np.minimum(0.0, d)
    return float((loss_out.sum() - loss_orc.sum()) / (s - r + 1))


def pinball_gap(
    support: np.ndarray,
    probs: np.ndarray,
    tau: float,
    alpha_star: float,
    alpha: float,
) -> tuple[float, float]:
    """Expectation gap E[l(beta, tau)] - E[l(beta, alpha_star)] and its closed form.

    ``alpha_star`` must be an exact alpha-quantile of the discrete level
    distribution: P(beta < alpha_star) = alpha to within 1e-12.  The left
    value is the gap by exact enumeration; the right value evaluates

        E[(tau - beta) 1{alpha_star < beta <= tau}]   for tau >= alpha_star,
        E[(beta - tau) 1{tau < beta <= alpha_star}]   otherwise.

    The two coincide whenever the distribution puts no mass exactly on
    ``alpha_star``; a point mass there enters the enumerated gap but not
    the closed form (the identity's derivation closes the indicator at
    alpha_star, the stated form opens it).
    """
    x = np.asarray(support, dtype=np.float64)
    p = np.asarray(probs, dtype=np.float64)
    if x.shape != p.shape or x.ndim != 1 or x.size == 0:
        raise ValueError("support and probabilities must be equal-length nonempty vectors")
    if p.min() < 0.0 or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("probabilities must be nonnegative and sum to one")
    left_mass = float(p[x < alpha_star].sum())
    if abs(left_mass - alpha) > 1e-12:
        raise ValueError(
            f"quantile precondition violated: P(beta < alpha_star) = {left_mass}, expected {alpha}"
        )
    lhs = float(sum(pi * (pinball_loss(xi, tau, alpha) - pinball_loss(xi, alpha_star, alpha)) for xi, pi in zip(x, p)))
    if tau >= alpha_star:
        mask = (x > alpha_star) & (x <= tau)
        rhs = float((p[mask] * (tau - x[mask])).sum())
    else:
        mask = (x > tau) & (x <= alpha_star)
        rhs = float((p[mask] * (x[mask] - tau)).sum())
    return lhs, rhs
