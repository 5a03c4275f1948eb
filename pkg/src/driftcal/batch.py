"""Compiled batch trajectories for the online learners.

These kernels replay the exact update sequence of the step-by-step API
(:mod:`driftcal.aci`, :mod:`driftcal.faci`) over a whole realized-level
stream at once; the per-step API stays the reference implementation and the
two are held together by tests.  Throughput-critical paths (million-step
experiments) go through here.
"""

from __future__ import annotations

import numpy as np
from numba import njit

ETA_FIXED = 0
ETA_WINDOWED = 1
ETA_DECAYING = 2


@njit(cache=True)
def _pinball(beta: float, theta: float, alpha: float) -> float:
    d = beta - theta
    m = d if d < 0.0 else 0.0
    return alpha * d - m


@njit(cache=True)
def aci_path(betas, gamma, alpha, alpha_init):
    n = betas.shape[0]
    alphas = np.empty(n)
    errs = np.empty(n)
    a = alpha_init
    for t in range(n):
        err = 1.0 if betas[t] < a else 0.0
        alphas[t] = a
        errs[t] = err
        a = a + gamma * (alpha - err)
    return alphas, errs


@njit(cache=True)
def ensemble_path(
    betas,
    gammas,
    alpha,
    expert_alpha0,
    weights0,
    eta_mode,
    fixed_eta,
    sigma_fixed,
    eta_scale,
    log_term,
    interval_length,
    randomized,
    uniforms,
    record_experts,
):
    """Replay the ensemble over a level stream.

    Returns per-step emitted level, error indicator, eta, sigma, selected
    tracker index (-1 when averaging), the probability-weighted mean level,
    optional tracker-level history (pre-update, as seen by the emitter), and
    the final weights and tracker levels.
    """
    n = betas.shape[0]
    k = gammas.shape[0]
    w = weights0.copy()
    a = expert_alpha0.copy()

    out_alpha = np.empty(n)
    out_err = np.empty(n)
    out_eta = np.empty(n)
    out_sigma = np.empty(n)
    out_idx = np.full(n, -1, np.int64)
    mean_alpha = np.empty(n)
    hist_rows = n if record_experts else 0
    expert_hist = np.empty((hist_rows, k))
    prob_hist = np.empty((hist_rows, k))

    buf = np.zeros(interval_length)
    buf_n = 0
    buf_pos = 0
    sumsq = 0.0

    for t in range(n):
        step = t + 1
        if eta_mode == ETA_FIXED:
            eta = fixed_eta
            sig = sigma_fixed
        elif eta_mode == ETA_WINDOWED:
            if buf_n == interval_length and sumsq > 0.0:
                eta = np.sqrt(log_term / sumsq)
            else:
                eta = fixed_eta
            sig = sigma_fixed
        else:
            eta = eta_scale / np.sqrt(step)
            sig = min(0.5, 1.0 / step)

        if record_experts:
            for i in range(k):
                expert_hist[t, i] = a[i]
                prob_hist[t, i] = w[i]

        pa = 0.0
        for i in range(k):
            pa += w[i] * a[i]
        mean_alpha[t] = pa
        if randomized:
            u = uniforms[t]
            cum = 0.0
            idx = k - 1
            for i in range(k):
                cum += w[i]
                if u < cum:
                    idx = i
                    break
            out = a[idx]
            out_idx[t] = idx
        else:
            out = pa

        beta = betas[t]
        err = 1.0 if beta < out else 0.0
        out_alpha[t] = out
        out_err[t] = err
        out_eta[t] = eta
        out_sigma[t] = sig

        total = 0.0
        for i in range(k):
            w[i] = w[i] * np.exp(-eta * _pinball(beta, a[i], alpha))
            total += w[i]
        mixed_total = 0.0
        floor = total * (sig / k)
        for i in range(k):
            w[i] = (1.0 - sig) * w[i] + floor
            mixed_total += w[i]
        for i in range(k):
            w[i] = w[i] / mixed_total

        for i in range(k):
            e = 1.0 if beta < a[i] else 0.0
            a[i] = a[i] + gammas[i] * (alpha - e)

        if eta_mode == ETA_WINDOWED:
            lo = _pinball(beta, out, alpha)
            if buf_n == interval_length:
                old = buf[buf_pos]
                sumsq -= old * old
            else:
                buf_n += 1
            buf[buf_pos] = lo
            sumsq += lo * lo
            buf_pos += 1
            if buf_pos == interval_length:
                buf_pos = 0

    return out_alpha, out_err, out_eta, out_sigma, out_idx, mean_alpha, expert_hist, prob_hist, w, a
