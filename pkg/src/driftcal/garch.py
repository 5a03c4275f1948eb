"""Conditional-variance simulation and quasi-likelihood fitting.

The volatility process is the standard one-lag recursion

    sigma2_t = omega + tau R_{t-1}^2 + lam sigma2_{t-1},    R_t = sigma_t eps_t

with Gaussian innovations in simulation and a Gaussian quasi-likelihood in
fitting (consistent under misspecified innovations).  The same recursion, in
the same order of floating-point operations, reconstructs the variance path
inside the likelihood so simulated and fitted paths agree exactly at the true
parameters.

Fitting minimizes nll = 1/2 sum_t (log sigma2_t + R_t^2 / sigma2_t) with a
derivative-free simplex search from three fixed variance-targeting starts,
inside the box omega in [1e-8, 10 var(R)], tau, lam in [0, 0.999],
tau + lam <= 0.999.  If no start improves on the flat variance-targeting
point (tau = lam = 0, omega = var(R)), that point is returned with a
degraded flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .rng import SUB_SIM, make_rng

__all__ = [
    "GarchParams",
    "GarchFit",
    "garch_simulate",
    "garch_variance_path",
    "garch_nll",
    "garch_fit",
    "volatility_scores",
    "rolling_volatility_forecasts",
]

# (tau, lam) multi-start points; omega from variance targeting.
_FIT_STARTS = ((0.05, 0.90), (0.10, 0.80), (0.02, 0.45))


@dataclass(frozen=True, slots=True)
class GarchParams:
    """Variance recursion coefficients: level omega, shock tau, persistence lam."""

    omega: float
    tau: float
    lam: float

    def __post_init__(self) -> None:
        if not self.omega > 0.0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if self.tau < 0.0 or self.lam < 0.0:
            raise ValueError(f"tau and lam must be nonnegative, got ({self.tau}, {self.lam})")

    @property
    def persistence(self) -> float:
        return self.tau + self.lam

    def stationary_variance(self) -> float:
        if self.persistence >= 1.0:
            raise ValueError(f"no stationary variance: tau + lam = {self.persistence} >= 1")
        return self.omega / (1.0 - self.tau - self.lam)


@dataclass(frozen=True, slots=True)
class GarchFit:
    """Fitted recursion plus the in-window variance path it implies.

    ``one_step_forecast`` is the variance for the day after the window,
    omega + tau R_W^2 + lam sigma2_path[-1], from the stored fields.
    """

    params: GarchParams
    nll: float
    sigma2_init: float
    sigma2_path: np.ndarray
    one_step_forecast: float
    converged: bool
    degraded: bool


def garch_simulate(
    params: GarchParams,
    n: int,
    seed: int | None = None,
    *,
    sigma2_init: float | None = None,
    innovations: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Simulate ``n`` returns; gives back (returns, true variance path).

    The variance starts from the stationary level unless overridden.
    ``innovations`` replaces the Gaussian draws (test hook; all-zero
    innovations collapse the recursion onto omega / (1 - lam)).
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if innovations is None:
        eps = make_rng(0 if seed is None else seed, SUB_SIM).standard_normal(n)
    else:
        eps = np.asarray(innovations, dtype=np.float64)
        if eps.shape != (n,):
            raise ValueError(f"innovations must have shape ({n},)")
    s0 = params.stationary_variance() if sigma2_init is None else float(sigma2_init)
    if not s0 > 0.0:
        raise ValueError(f"initial variance must be positive, got {s0}")
    r = np.empty(n)
    sigma2 = np.empty(n)
    s = s0
    for t in range(n):
        sigma2[t] = s
        r[t] = math.sqrt(s) * eps[t]
        s = params.omega + params.tau * (r[t] * r[t]) + params.lam * s
    return r, sigma2


def garch_variance_path(params: GarchParams, returns: np.ndarray, sigma2_init: float) -> np.ndarray:
    """Variance path implied by observed returns, sigma2_1 = sigma2_init.

    Linear recursion evaluated as an IIR filter; the operation order matches
    the simulator exactly.
    """
    r = np.asarray(returns, dtype=np.float64)
    if r.ndim != 1 or r.size == 0:
        raise ValueError("returns must be a nonempty vector")
    out = np.empty(r.size)
    out[0] = sigma2_init
    if r.size > 1:
        x = params.omega + params.tau * (r[:-1] * r[:-1])
        y, _ = lfilter([1.0], [1.0, -params.lam], x, zi=np.array([params.lam * sigma2_init]))
        out[1:] = y
    return out


def garch_nll(params: GarchParams, returns: np.ndarray, sigma2_init: float) -> float:
    """Gaussian quasi negative log-likelihood, up to the constant term.

    Returns +inf for parameter points whose variance path degenerates, so
    optimizers can probe freely.
    """
    r = np.asarray(returns, dtype=np.float64)
    if not sigma2_init > 0.0:
        return math.inf
    s = garch_variance_path(params, r, sigma2_init)
    if not np.all(np.isfinite(s)) or s.min() <= 0.0:
        return math.inf
    val = 0.5 * float(np.sum(np.log(s) + (r * r) / s))
    return val if math.isfinite(val) else math.inf


def garch_fit(returns: np.ndarray, *, maxiter: int = 2000) -> GarchFit:
    """Fit the recursion to a window of returns by quasi-likelihood.

    sigma2_1 is pinned to the window's sample variance.  Simplex search from
    three fixed starts; the box and the persistence cap are enforced by an
    infinite penalty.  Falls back to variance targeting (tau = lam = 0,
    omega = var(R)) with ``degraded=True`` when no start improves on it.
    """
    r = np.asarray(returns, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise ValueError("need a one-dimensional window of at least 2 returns")
    v = float(np.var(r))
    if not v > 0.0:
        raise ValueError("degenerate returns window: zero variance")
    omega_hi = 10.0 * v

    def objective(x: np.ndarray) -> float:
        w, t_, l_ = x
        if not (1e-8 <= w <= omega_hi and 0.0 <= t_ <= 0.999 and 0.0 <= l_ <= 0.999 and t_ + l_ <= 0.999):
            return math.inf
        return garch_nll(GarchParams(w, t_, l_), r, v)

    best = None
    for tau0, lam0 in _FIT_STARTS:
        x0 = np.array([max(v * (1.0 - tau0 - lam0), 1e-8), tau0, lam0])
        res = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            options={"xatol": 1e-6, "fatol": 1e-9, "maxiter": maxiter, "maxfev": maxiter},
        )
        if best is None or res.fun < best.fun:
            best = res

    def finish(params: GarchParams, nll: float, converged: bool, degraded: bool) -> GarchFit:
        path = garch_variance_path(params, r, v)
        forecast = params.omega + params.tau * (r[-1] * r[-1]) + params.lam * path[-1]
        return GarchFit(
            params=params,
            nll=nll,
            sigma2_init=v,
            sigma2_path=path,
            one_step_forecast=forecast,
            converged=converged,
            degraded=degraded,
        )

    fallback = GarchParams(v, 0.0, 0.0)
    fallback_nll = garch_nll(fallback, r, v)
    if best is not None and best.fun < fallback_nll:
        w, t_, l_ = best.x
        return finish(GarchParams(float(w), float(t_), float(l_)), float(best.fun), bool(best.success), False)
    return finish(fallback, fallback_nll, False, True)


def volatility_scores(values: np.ndarray, forecasts: np.ndarray, kind: str = "normalized") -> np.ndarray:
    """Conformity scores of realized variance proxies against forecasts.

    ``unnormalized`` and ``absolute`` both name the plain residual |v - f|.
    """
    v = np.asarray(values, dtype=np.float64)
    f = np.asarray(forecasts, dtype=np.float64)
    if v.shape != f.shape:
        raise ValueError("values and forecasts must have the same shape")
    if kind in ("unnormalized", "absolute"):
        return np.abs(v - f)
    if kind == "normalized":
        if f.size and f.min() <= 0.0:
            raise ValueError("normalized scores need positive forecasts")
        return np.abs(v - f) / f
    raise ValueError(f"unknown score kind {kind!r}")


def rolling_volatility_forecasts(
    returns: np.ndarray,
    window: int,
    stride: int = 1,
    *,
    maxiter: int = 2000,
) -> tuple[np.ndarray, np.ndarray, int]:
    """One-step-ahead variance forecasts from rolling refits.

    Day t (0-based, t >= window) is forecast from parameters refit every
    ``stride`` days on the trailing ``window`` returns; between refits the
    last parameters keep advancing the recursion.  Returns (day indices,
    forecasts, number of degraded fits).
    """
    r = np.asarray(returns, dtype=np.float64)
    if window < 2 or stride < 1:
        raise ValueError("window must be >= 2 and stride >= 1")
    if r.size <= window:
        raise ValueError(f"need more than window={window} returns, got {r.size}")
    days = np.arange(window, r.size)
    fc = np.empty(days.size)
    degraded = 0
    params: GarchParams | None = None
    state = 0.0
    for j, t in enumerate(days):
        if j % stride == 0:
            fit = garch_fit(r[t - window : t], maxiter=maxiter)
            params = fit.params
            degraded += int(fit.degraded)
            state = fit.one_step_forecast
        else:
            state = params.omega + params.tau * (r[t - 1] * r[t - 1]) + params.lam * state
        fc[j] = state
    return days, fc, degraded
