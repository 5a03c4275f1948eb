"""Step-size aggregation for online level tracking.

A bank of k single-step-size trackers runs on a geometric gamma grid; an
exponentially weighted forecaster mixes them through the pinball loss of
each tracker's proposed level against the realized level:

    wbar_i = w_i exp(-eta_t l(beta_t, alpha_t^i)),    Wbar = sum_i wbar_i
    w_i   <- (1 - sigma_t) wbar_i + Wbar sigma_t / k

The mixing floor sigma keeps every tracker alive so the ensemble can chase
whichever step size the current regime favors.  Output is either the
probability-weighted average level (deterministic) or a single tracker's
level drawn from the probabilities (randomized); neither output feeds back
into the weights or the trackers, so both variants share one trajectory of
internal state on a common beta stream.

The learning rate eta follows one of three schedules:

``fixed``      the closed-form heuristic for a target interval length,
               eta = sqrt((log(k L) + 2) / (L m2(alpha))) with m2 the
               second moment of the pinball loss under a uniform level;
``windowed``   recomputed each step from the trailing L realized losses,
               falling back to the fixed heuristic until the window fills
               (or if the window is degenerate);
``decaying``   eta_t = c t^(-1/2), sigma_t = min(1/2, 1/t), the anytime
               schedule with a long-run coverage guarantee.

Weights are renormalized to unit sum after every step; this is a pure
rescaling (probabilities are unchanged) and prevents underflow on long
streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conformal import TargetLevel, pinball_loss

__all__ = [
    "DEFAULT_GAMMA_GRID",
    "DEFAULT_INTERVAL_LENGTH",
    "ExpertState",
    "EnsembleState",
    "EtaSchedule",
    "pinball_second_moment",
    "fixed_eta_heuristic",
    "dynamic_eta",
    "update_weights",
    "update_experts",
    "faci_step_averaged",
    "faci_step_randomized",
]

# Step-size grid used throughout the coverage experiments.
DEFAULT_GAMMA_GRID = (0.001, 0.002, 0.004, 0.008, 0.016, 0.032, 0.064, 0.128)
DEFAULT_INTERVAL_LENGTH = 500


def pinball_second_moment(alpha: float) -> float:
    """E[l(beta, alpha)^2] for beta ~ Unif(0, 1): ((1-a)^2 a^3 + a^2 (1-a)^3) / 3."""
    a = TargetLevel(alpha).alpha
    return ((1.0 - a) ** 2 * a**3 + a**2 * (1.0 - a) ** 3) / 3.0


def fixed_eta_heuristic(alpha: float, k: int, interval_length: int) -> float:
    """Closed-form learning rate for k trackers tuned to a given interval length."""
    if k < 1:
        raise ValueError(f"need at least one tracker, got k={k}")
    if interval_length < 1:
        raise ValueError(f"interval length must be >= 1, got {interval_length}")
    num = math.log(k * interval_length) + 2.0
    return math.sqrt(num / (interval_length * pinball_second_moment(alpha)))


def dynamic_eta(trailing_losses: np.ndarray, k: int, interval_length: int) -> float:
    """Learning rate from realized losses: sqrt((log(k L) + 2) / sum l_s^2).

    ``trailing_losses`` are the raw (unsquared) pinball losses of the last
    emitted levels.  Raises on a degenerate window; callers fall back to
    :func:`fixed_eta_heuristic` in that case.
    """
    if k < 1 or interval_length < 1:
        raise ValueError("k and interval_length must be >= 1")
    losses = np.asarray(trailing_losses, dtype=np.float64)
    if losses.size == 0 or losses.min() < 0.0:
        raise ValueError("trailing losses must be nonempty and nonnegative")
    denom = float(np.dot(losses, losses))
    if denom <= 0.0:
        raise ValueError("degenerate loss window: sum of squares is zero")
    return math.sqrt((math.log(k * interval_length) + 2.0) / denom)


class EtaSchedule:
    """Per-step (eta_t, sigma_t) source; steps are 1-indexed.

    Holds the trailing-loss ring buffer for the windowed mode.  ``record``
    must be called once per step with the realized ensemble loss (it is a
    no-op outside windowed mode).
    """

    MODES = ("fixed", "windowed", "decaying")

    def __init__(
        self,
        mode: str = "fixed",
        *,
        alpha: float,
        k: int,
        interval_length: int = DEFAULT_INTERVAL_LENGTH,
        fixed_eta: float | None = None,
        sigma: float | None = None,
        eta_scale: float | None = None,
    ) -> None:
        if mode not in self.MODES:
            raise ValueError(f"unknown eta schedule mode {mode!r}")
        heuristic = fixed_eta_heuristic(alpha, k, interval_length)
        self.mode = mode
        self.k = int(k)
        self.interval_length = int(interval_length)
        self.fixed_eta = heuristic if fixed_eta is None else float(fixed_eta)
        self.sigma = 1.0 / (2 * interval_length) if sigma is None else float(sigma)
        if not 0.0 <= self.sigma <= 0.5:
            raise ValueError(f"mixing floor must lie in [0, 1/2], got {self.sigma}")
        self.eta_scale = heuristic if eta_scale is None else float(eta_scale)
        self._log_term = math.log(self.k * self.interval_length) + 2.0
        self._buf = np.zeros(self.interval_length)
        self._buf_n = 0
        self._buf_pos = 0
        self._sumsq = 0.0

    def rates(self, t: int) -> tuple[float, float]:
        """(eta_t, sigma_t) for 1-based step t."""
        if self.mode == "fixed":
            return self.fixed_eta, self.sigma
        if self.mode == "windowed":
            if self._buf_n == self.interval_length and self._sumsq > 0.0:
                return math.sqrt(self._log_term / self._sumsq), self.sigma
            return self.fixed_eta, self.sigma
        return self.eta_scale / math.sqrt(t), min(0.5, 1.0 / t)

    def record(self, loss: float) -> None:
        if self.mode != "windowed":
            return
        if self._buf_n == self.interval_length:
            old = self._buf[self._buf_pos]
            self._sumsq -= old * old
        else:
            self._buf_n += 1
        self._buf[self._buf_pos] = loss
        self._sumsq += loss * loss
        self._buf_pos += 1
        if self._buf_pos == self.interval_length:
            self._buf_pos = 0


@dataclass(slots=True)
class ExpertState:
    """One tracker in the bank: its step size, current level and diagnostics."""

    gamma: float
    alpha_t: float
    loss_sum: float = 0.0
    err_count: int = 0


@dataclass(slots=True)
class EnsembleState:
    """Weights and tracker bank; advanced in place, one call per observed level.

    ``literal_update`` reproduces a published variant in which every tracker
    restarts each step from the emitted ensemble level rather than its own;
    it collapses the bank to a single point and exists only for comparison.
    """

    experts: list[ExpertState]
    weights: np.ndarray
    target: TargetLevel
    schedule: EtaSchedule
    t: int = 1
    literal_update: bool = False
    _gammas: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.experts:
            raise ValueError("ensemble needs at least one tracker")
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (len(self.experts),) or w.min() < 0.0 or w.sum() <= 0.0:
            raise ValueError("weights must be a nonnegative vector matching the bank, with positive sum")
        self.weights = w / w.sum()
        self._gammas = np.array([e.gamma for e in self.experts])

    @classmethod
    def create(
        cls,
        alpha: float,
        gammas: tuple[float, ...] = DEFAULT_GAMMA_GRID,
        schedule: EtaSchedule | None = None,
        alpha_init: float | None = None,
        literal_update: bool = False,
    ) -> "EnsembleState":
        a0 = alpha if alpha_init is None else float(alpha_init)
        experts = [ExpertState(gamma=float(g), alpha_t=a0) for g in gammas]
        if schedule is None:
            schedule = EtaSchedule("fixed", alpha=alpha, k=len(experts))
        return cls(
            experts=experts,
            weights=np.full(len(experts), 1.0 / len(experts)),
            target=TargetLevel(alpha),
            schedule=schedule,
            literal_update=literal_update,
        )

    def probabilities(self) -> np.ndarray:
        """Current mixing probabilities (weights are kept at unit sum)."""
        return self.weights / self.weights.sum()

    def expert_alphas(self) -> np.ndarray:
        return np.array([e.alpha_t for e in self.experts])

    def expert_losses(self, beta: float) -> np.ndarray:
        a = self.target.alpha
        return np.array([pinball_loss(beta, e.alpha_t, a) for e in self.experts])


def update_weights(ensemble: EnsembleState, beta: float, eta_t: float, sigma_t: float) -> EnsembleState:
    """Exponential reweighting followed by the uniform mixing floor, in place.

    The mixing step preserves total mass: sum_i w_i stays equal to Wbar
    (checked to 1e-12 relative before the unit-sum renormalization).
    """
    if eta_t <= 0.0:
        raise ValueError(f"learning rate must be positive, got {eta_t}")
    if not 0.0 <= sigma_t <= 0.5:
        raise ValueError(f"mixing floor must lie in [0, 1/2], got {sigma_t}")
    losses = ensemble.expert_losses(beta)
    wbar = ensemble.weights * np.exp(-eta_t * losses)
    total = float(wbar.sum())
    if not total > 0.0:
        raise FloatingPointError("weight collapse: all mixture weights underflowed")
    k = len(ensemble.experts)
    mixed = (1.0 - sigma_t) * wbar + total * (sigma_t / k)
    mixed_total = float(mixed.sum())
    if abs(mixed_total - total) > 1e-12 * total:
        raise FloatingPointError("mixing step failed to preserve total weight")
    ensemble.weights = mixed / mixed_total
    return ensemble


def update_experts(ensemble: EnsembleState, beta: float, emitted: float | None = None) -> EnsembleState:
    """Advance every tracker on its own error indicator, in place."""
    alpha = ensemble.target.alpha
    for e in ensemble.experts:
        err = 1.0 if beta < e.alpha_t else 0.0
        e.loss_sum += pinball_loss(beta, e.alpha_t, alpha)
        e.err_count += int(err)
        base = e.alpha_t if not ensemble.literal_update else float(emitted)
        e.alpha_t = base + e.gamma * (alpha - err)
    return ensemble


def _step(ensemble: EnsembleState, beta: float, u: float | None) -> tuple[float, float, float, float, int]:
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"realized level must lie in [0, 1], got {beta}")
    eta_t, sigma_t = ensemble.schedule.rates(ensemble.t)
    p = ensemble.weights
    alphas = ensemble.expert_alphas()
    if u is None:
        out = float(np.dot(p, alphas))
        idx = -1
    else:
        if not 0.0 <= u < 1.0:
            raise ValueError(f"uniform draw must lie in [0, 1), got {u}")
        cum = 0.0
        idx = len(p) - 1
        for i in range(len(p)):
            cum += p[i]
            if u < cum:
                idx = i
                break
        out = float(alphas[idx])
    err = 1.0 if beta < out else 0.0
    update_weights(ensemble, beta, eta_t, sigma_t)
    update_experts(ensemble, beta, emitted=out)
    ensemble.schedule.record(pinball_loss(beta, out, ensemble.target.alpha))
    ensemble.t += 1
    return out, err, eta_t, sigma_t, idx


def faci_step_averaged(ensemble: EnsembleState, beta: float) -> tuple[EnsembleState, float, float]:
    """One deterministic step: emit the probability-weighted level, then update."""
    out, err, _, _, _ = _step(ensemble, beta, None)
    return ensemble, out, err


def faci_step_randomized(ensemble: EnsembleState, beta: float, rng_draw: float) -> tuple[EnsembleState, float, float]:
    """One randomized step: emit the level of the tracker drawn by inverse CDF.

    Consumes exactly one uniform draw; the draw affects only the emitted
    level, never the shared internal state.
    """
    out, err, _, _, _ = _step(ensemble, beta, float(rng_draw))
    return ensemble, out, err
