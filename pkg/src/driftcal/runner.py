"""Experiment execution: config validation, learner dispatch, step records.

`run_experiment` drives one learner over one stream (realized levels
directly, or scores through a rolling calibration window) and returns the
full per-step table plus the coverage report.  `run_panel` runs one learner
per unit against pooled cross-sectional calibration.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, fields, replace
from typing import Iterator, NamedTuple

import numpy as np

from . import batch
from .conformal import ScoreWindow, empirical_quantile, interval_from_quantile
from .faci import (
    DEFAULT_GAMMA_GRID,
    DEFAULT_INTERVAL_LENGTH,
    EnsembleState,
    EtaSchedule,
    _step as _ensemble_step,
    fixed_eta_heuristic,
)
from .garch import volatility_scores
from .metrics import CoverageReport, compute_metrics
from .regression import panel_score
from .rng import SUB_BERNOULLI, SUB_LEARNER, make_rng
from .streams import BetaStream, PanelData, ScoreStream, SeriesStream

__all__ = [
    "ALGORITHMS",
    "SCORE_KINDS",
    "ConfigError",
    "ExperimentConfig",
    "StepRecord",
    "StepTable",
    "run_experiment",
    "run_panel",
]

logger = logging.getLogger("driftcal")

ALGORITHMS = ("aci", "faci-randomized", "faci-averaged", "fixed-alpha", "bernoulli")
SCORE_KINDS = ("absolute", "normalized", "relative")

LOCAL_WINDOW_SINGLE = 500
LOCAL_WINDOW_PANEL = 200


class ConfigError(ValueError):
    """Invalid experiment configuration; maps to CLI exit code 2."""


@dataclass(frozen=True)
class ExperimentConfig:
    alpha: float = 0.1
    algorithm: str = "faci-averaged"
    gammas: tuple[float, ...] = DEFAULT_GAMMA_GRID
    interval_length: int = DEFAULT_INTERVAL_LENGTH
    eta_mode: str = "fixed"
    fixed_eta: float | None = None
    sigma: float | None = None
    eta_scale: float | None = None
    window_capacity: int = 1250
    score_kind: str = "absolute"
    seed: int = 0
    bins: int = 10
    min_bin_count: int = 30
    local_window: int | None = None
    record_experts: bool = False
    input: str | None = None
    output: str | None = None

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        kwargs = dict(raw)
        if "gammas" in kwargs:
            try:
                kwargs["gammas"] = tuple(float(g) for g in kwargs["gammas"])
            except (TypeError, ValueError):
                raise ConfigError(f"gammas must be a list of numbers, got {kwargs['gammas']!r}") from None
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {list(ALGORITHMS)}, got {self.algorithm!r}")
        if not self.gammas or any(g < 0.0 for g in self.gammas):
            raise ConfigError(f"gammas must be a non-empty list of nonnegative step sizes, got {self.gammas}")
        if self.algorithm == "aci" and len(self.gammas) != 1:
            raise ConfigError(f"the single-tracker algorithm takes exactly one gamma, got {len(self.gammas)}")
        if self.interval_length < 1:
            raise ConfigError(f"interval_length must be >= 1, got {self.interval_length}")
        if self.eta_mode not in EtaSchedule.MODES:
            raise ConfigError(f"eta_mode must be one of {list(EtaSchedule.MODES)}, got {self.eta_mode!r}")
        if self.fixed_eta is not None and not self.fixed_eta > 0.0:
            raise ConfigError(f"fixed_eta must be positive, got {self.fixed_eta}")
        if self.sigma is not None and not 0.0 <= self.sigma <= 0.5:
            raise ConfigError(f"sigma must lie in [0, 1/2], got {self.sigma}")
        if self.eta_scale is not None and not self.eta_scale > 0.0:
            raise ConfigError(f"eta_scale must be positive, got {self.eta_scale}")
        if self.window_capacity < 1:
            raise ConfigError(f"window_capacity must be >= 1, got {self.window_capacity}")
        if self.score_kind not in SCORE_KINDS:
            raise ConfigError(f"score_kind must be one of {list(SCORE_KINDS)}, got {self.score_kind!r}")
        if self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed}")
        if self.bins < 1:
            raise ConfigError(f"bins must be >= 1, got {self.bins}")
        if self.min_bin_count < 1:
            raise ConfigError(f"min_bin_count must be >= 1, got {self.min_bin_count}")
        if self.local_window is not None and (self.local_window < 2 or self.local_window % 2):
            raise ConfigError(f"local_window must be even and >= 2, got {self.local_window}")

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seed=int(seed))


class StepRecord(NamedTuple):
    t: int
    alpha_t: float
    beta_t: float
    err_t: float
    interval_lo: float
    interval_hi: float
    width: float
    eta_t: float
    selected_expert: int
    unit: str | None = None
    expert_alphas: np.ndarray | None = None


@dataclass
class StepTable:
    """Column-major step log; one row per evaluated step."""

    t: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    err: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    width: np.ndarray
    eta: np.ndarray
    selected: np.ndarray
    unit: np.ndarray | None = None
    expert_alpha: np.ndarray | None = None
    mean_alpha: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return int(self.t.size)

    def record(self, i: int) -> StepRecord:
        return StepRecord(
            t=int(self.t[i]),
            alpha_t=float(self.alpha[i]),
            beta_t=float(self.beta[i]),
            err_t=float(self.err[i]),
            interval_lo=float(self.lo[i]),
            interval_hi=float(self.hi[i]),
            width=float(self.width[i]),
            eta_t=float(self.eta[i]),
            selected_expert=int(self.selected[i]),
            unit=None if self.unit is None else str(self.unit[i]),
            expert_alphas=None if self.expert_alpha is None else self.expert_alpha[i],
        )

    def __iter__(self) -> Iterator[StepRecord]:
        return (self.record(i) for i in range(len(self)))


_ETA_MODE_CODE = {"fixed": batch.ETA_FIXED, "windowed": batch.ETA_WINDOWED, "decaying": batch.ETA_DECAYING}


def _schedule_constants(config: ExperimentConfig, k: int) -> tuple[float, float, float, float]:
    heuristic = fixed_eta_heuristic(config.alpha, k, config.interval_length)
    fixed_eta = heuristic if config.fixed_eta is None else config.fixed_eta
    sigma = 1.0 / (2 * config.interval_length) if config.sigma is None else config.sigma
    eta_scale = heuristic if config.eta_scale is None else config.eta_scale
    log_term = math.log(k * config.interval_length) + 2.0
    return fixed_eta, sigma, eta_scale, log_term


def _run_learner(betas: np.ndarray, config: ExperimentConfig):
    """Drive the configured learner over a realized-level sequence.

    Returns (alpha_t, err, eta, selected, bin_series, expert_hist) where
    bin_series is what conditional-coverage bins are computed on (the
    probability-weighted mean level for the ensemble variants).
    """
    n = betas.size
    alpha = config.alpha
    nan = np.full(n, np.nan)
    none_idx = np.full(n, -1, dtype=np.int64)

    if config.algorithm == "fixed-alpha":
        alphas = np.full(n, alpha)
        errs = (betas < alpha).astype(np.float64)
        return alphas, errs, nan, none_idx, alphas, None

    if config.algorithm == "bernoulli":
        u = make_rng(config.seed, SUB_BERNOULLI).random(n)
        alphas = np.full(n, alpha)
        errs = (u < alpha).astype(np.float64)
        return alphas, errs, nan, none_idx, alphas, None

    if config.algorithm == "aci":
        alphas, errs = batch.aci_path(betas, config.gammas[0], alpha, alpha)
        return alphas, errs, nan, none_idx, alphas, None

    randomized = config.algorithm == "faci-randomized"
    gammas = np.asarray(config.gammas, dtype=np.float64)
    k = gammas.size
    fixed_eta, sigma, eta_scale, log_term = _schedule_constants(config, k)
    uniforms = make_rng(config.seed, SUB_LEARNER).random(n) if randomized else np.zeros(0)
    out_alpha, out_err, out_eta, _, out_idx, mean_alpha, expert_hist, _, _, _ = batch.ensemble_path(
        betas,
        gammas,
        alpha,
        np.full(k, alpha),
        np.full(k, 1.0 / k),
        _ETA_MODE_CODE[config.eta_mode],
        fixed_eta,
        sigma,
        eta_scale,
        log_term,
        config.interval_length,
        randomized,
        uniforms,
        config.record_experts,
    )
    hist = expert_hist if config.record_experts else None
    idx = out_idx if randomized else none_idx
    return out_alpha, out_err, out_eta, idx, mean_alpha, hist


def _extract_scores(stream: ScoreStream | SeriesStream, config: ExperimentConfig) -> np.ndarray:
    if isinstance(stream, ScoreStream):
        return np.asarray(stream.score, dtype=np.float64)
    if config.score_kind == "relative":
        raise ConfigError(
            "relative scores need the panel schema (t,unit,y,y_hat,y_lag); "
            "series streams support absolute or normalized"
        )
    y = np.asarray(stream.y, dtype=np.float64)
    pred = np.asarray(stream.point_pred, dtype=np.float64)
    if config.score_kind == "normalized" and stream.scale is not None:
        scale = np.asarray(stream.scale, dtype=np.float64)
        if scale.size and scale.min() <= 0.0:
            raise ValueError("normalized scores need positive scale values")
        return np.abs(y - pred) / scale
    return volatility_scores(y, pred, kind=config.score_kind)


def _betas_from_scores(scores: np.ndarray, capacity: int) -> np.ndarray:
    window = ScoreWindow(capacity, scores[:capacity])
    n_eval = scores.size - capacity
    betas = np.empty(n_eval)
    for i in range(n_eval):
        s = scores[capacity + i]
        betas[i] = window.count_geq(s) / len(window)
        window.push(s)
    return betas


def _series_intervals(
    stream: SeriesStream,
    scores: np.ndarray,
    alphas: np.ndarray,
    config: ExperimentConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Score-threshold intervals for each evaluated step of a series stream.

    Replays the calibration window a second time; the quantile at step t is
    taken before the step's own score enters the window, matching the level
    the learner was judged on.
    """
    capacity = config.window_capacity
    window = ScoreWindow(capacity, scores[:capacity])
    n_eval = scores.size - capacity
    lo = np.empty(n_eval)
    hi = np.empty(n_eval)
    pred = np.asarray(stream.point_pred, dtype=np.float64)
    scale = None if stream.scale is None else np.asarray(stream.scale, dtype=np.float64)
    for i in range(n_eval):
        j = capacity + i
        q = empirical_quantile(1.0 - alphas[i], window)
        if config.score_kind == "normalized" and scale is not None:
            iv = interval_from_quantile(pred[j], q * scale[j], "absolute")
        else:
            iv = interval_from_quantile(pred[j], q, config.score_kind)
        lo[i], hi[i] = iv
        window.push(scores[j])
    return lo, hi, hi - lo


def _tie_steps(betas: np.ndarray, alphas: np.ndarray, errs: np.ndarray) -> int:
    """Steps where set membership and the strict error rule disagree."""
    member_err = np.where(alphas <= 0.0, 0.0, np.where(alphas >= 1.0, 1.0, (betas <= alphas).astype(np.float64)))
    return int(np.sum(member_err != errs))


def run_experiment(stream: BetaStream | ScoreStream | SeriesStream, config: ExperimentConfig) -> tuple[StepTable, CoverageReport]:
    config.validate()
    counters: dict[str, int | float] = {"algorithm_seed": config.seed}
    scores: np.ndarray | None = None

    if isinstance(stream, BetaStream):
        betas = np.asarray(stream.beta, dtype=np.float64)
        if betas.size == 0:
            raise ValueError("empty stream")
        if betas.min() < 0.0 or betas.max() > 1.0:
            bad = betas[(betas < 0.0) | (betas > 1.0)][0]
            raise ValueError(f"realized levels must lie in [0, 1], got {bad}")
        t_eval = np.asarray(stream.t, dtype=np.int64)
    else:
        scores = _extract_scores(stream, config)
        capacity = config.window_capacity
        if scores.size <= capacity:
            raise ValueError(
                f"stream has {scores.size} scores but the calibration window needs "
                f"{capacity} warm-up rows plus at least one evaluation row "
                f"({capacity + 1} total)"
            )
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores must be finite")
        betas = _betas_from_scores(scores, capacity)
        t_eval = np.asarray(stream.t, dtype=np.int64)[capacity:]

    alphas, errs, etas, selected, bin_series, expert_hist = _run_learner(betas, config)

    n = betas.size
    lo = np.full(n, np.nan)
    hi = np.full(n, np.nan)
    width = np.full(n, np.nan)
    widths_for_report = None
    if isinstance(stream, SeriesStream):
        lo, hi, width = _series_intervals(stream, scores, alphas, config)
        widths_for_report = width
    if scores is not None:
        counters["quantile_tie_steps"] = _tie_steps(betas, alphas, errs)
        counters["warmup_rows"] = config.window_capacity

    table = StepTable(
        t=t_eval,
        alpha=alphas,
        beta=betas,
        err=errs,
        lo=lo,
        hi=hi,
        width=width,
        eta=etas,
        selected=selected,
        expert_alpha=expert_hist,
        mean_alpha=bin_series,
    )
    report = compute_metrics(
        bin_series,
        errs,
        target_alpha=config.alpha,
        t=t_eval,
        widths=widths_for_report,
        bins=config.bins,
        local_window=LOCAL_WINDOW_SINGLE if config.local_window is None else config.local_window,
        min_bin_count=config.min_bin_count,
        counters=counters,
    )
    return table, report


class _UnitLearner:
    """Per-unit state for the panel loop: one tracker bank or one recursion."""

    __slots__ = ("config", "alpha_t", "ensemble", "rng")

    def __init__(self, config: ExperimentConfig, unit_index: int) -> None:
        self.config = config
        self.alpha_t = config.alpha
        self.ensemble: EnsembleState | None = None
        self.rng: np.random.Generator | None = None
        algo = config.algorithm
        if algo in ("faci-averaged", "faci-randomized"):
            fixed_eta, sigma, eta_scale, _ = _schedule_constants(config, len(config.gammas))
            schedule = EtaSchedule(
                config.eta_mode,
                alpha=config.alpha,
                k=len(config.gammas),
                interval_length=config.interval_length,
                fixed_eta=fixed_eta,
                sigma=sigma,
                eta_scale=eta_scale,
            )
            self.ensemble = EnsembleState.create(config.alpha, config.gammas, schedule=schedule)
        if algo == "faci-randomized":
            self.rng = make_rng(config.seed, SUB_LEARNER, unit_index)
        elif algo == "bernoulli":
            self.rng = make_rng(config.seed, SUB_BERNOULLI, unit_index)

    def step(self, beta: float) -> tuple[float, float, float, float, int, np.ndarray | None]:
        """Observe one realized level; returns (emitted, err, eta, mean_level, selected, bank)."""
        algo = self.config.algorithm
        if self.ensemble is not None:
            ens = self.ensemble
            eta_t, _ = ens.schedule.rates(ens.t)
            mean_level = float(np.dot(ens.probabilities(), ens.expert_alphas()))
            bank = ens.expert_alphas() if self.config.record_experts else None
            u = self.rng.random() if self.rng is not None else None
            out, err, _, _, idx = _ensemble_step(ens, beta, u)
            return out, err, eta_t, mean_level, idx, bank
        if algo == "bernoulli":
            err = 1.0 if self.rng.random() < self.config.alpha else 0.0
            return self.config.alpha, err, math.nan, self.config.alpha, -1, None
        if algo == "fixed-alpha":
            err = 1.0 if beta < self.config.alpha else 0.0
            return self.config.alpha, err, math.nan, self.config.alpha, -1, None
        out = self.alpha_t
        err = 1.0 if beta < out else 0.0
        self.alpha_t = out + self.config.gammas[0] * (self.config.alpha - err)
        return out, err, math.nan, out, -1, None


def run_panel(panel: PanelData, config: ExperimentConfig) -> tuple[StepTable, CoverageReport]:
    """Per-unit learners over pooled cross-sectional calibration.

    The calibration pool at time t is the cross-section of unit scores at
    the previous observed time; the first time step and any step following
    an all-invalid cross-section are skipped without advancing learner
    state.  Units absent at a time simply do not step.
    """
    config.validate()
    t_arr = np.asarray(panel.t, dtype=np.int64)
    units = np.asarray(panel.unit, dtype=object)
    y = np.asarray(panel.y, dtype=np.float64)
    y_hat = np.asarray(panel.y_hat, dtype=np.float64)
    y_lag = np.asarray(panel.y_lag, dtype=np.float64)
    if not (t_arr.shape == units.shape == y.shape == y_hat.shape == y_lag.shape):
        raise ValueError("panel columns must be aligned")
    if t_arr.size == 0:
        raise ValueError("empty panel")

    unit_names = sorted(set(units.tolist()))
    unit_index = {u: i for i, u in enumerate(unit_names)}
    learners = {u: _UnitLearner(config, unit_index[u]) for u in unit_names}

    order = np.lexsort((units, t_arr))
    times = np.unique(t_arr)

    counters: dict[str, int | float] = {
        "n_units": len(unit_names),
        "zero_denominator_skips": 0,
        "empty_pool_steps": 0,
        "unbounded_sets": 0,
        "algorithm_seed": config.seed,
    }

    rec_t: list[int] = []
    rec_unit: list[str] = []
    rec_alpha: list[float] = []
    rec_beta: list[float] = []
    rec_err: list[float] = []
    rec_lo: list[float] = []
    rec_hi: list[float] = []
    rec_width: list[float] = []
    rec_eta: list[float] = []
    rec_sel: list[int] = []
    rec_mean: list[float] = []
    rec_bank: list[np.ndarray] = []
    time_err_mean: list[float] = []
    time_values: list[int] = []

    pool: np.ndarray | None = None
    pos = 0
    n_rows = order.size
    for time in times:
        stop = pos
        while stop < n_rows and t_arr[order[stop]] == time:
            stop += 1
        rows = order[pos:stop]
        pos = stop

        step_scores: list[float] = []
        step_errs: list[float] = []
        evaluate = pool is not None and pool.size > 0
        if pool is not None and pool.size == 0:
            counters["empty_pool_steps"] += 1
            logger.warning("time %d: empty calibration cross-section, step skipped", int(time))
        sorted_pool = np.sort(pool) if evaluate else None
        pool_n = sorted_pool.size if evaluate else 0

        for r in rows:
            try:
                s = panel_score(y[r], y_hat[r], y_lag[r])
            except ZeroDivisionError:
                counters["zero_denominator_skips"] += 1
                continue
            step_scores.append(s)
            if not evaluate:
                continue
            beta = float(pool_n - np.searchsorted(sorted_pool, s, side="left")) / pool_n
            learner = learners[units[r]]
            out, err, eta_t, mean_level, idx, bank = learner.step(beta)
            q = empirical_quantile(1.0 - out, sorted_pool)
            try:
                iv = interval_from_quantile(y_hat[r], q, "relative", aux=y_lag[r])
                lo_v, hi_v = iv.lo, iv.hi
            except ValueError:
                counters["unbounded_sets"] += 1
                lo_v, hi_v = math.nan, math.nan
            rec_t.append(int(time))
            rec_unit.append(str(units[r]))
            rec_alpha.append(out)
            rec_beta.append(beta)
            rec_err.append(err)
            rec_lo.append(lo_v)
            rec_hi.append(hi_v)
            rec_width.append(hi_v - lo_v)
            rec_eta.append(eta_t)
            rec_sel.append(idx)
            rec_mean.append(mean_level)
            if bank is not None:
                rec_bank.append(bank)
            step_errs.append(err)

        if step_errs:
            time_err_mean.append(float(np.mean(step_errs)))
            time_values.append(int(time))
        pool = np.asarray(step_scores, dtype=np.float64)

    if not rec_t:
        raise ValueError("panel produced no evaluated steps (need at least two time points with valid scores)")

    table = StepTable(
        t=np.asarray(rec_t, dtype=np.int64),
        alpha=np.asarray(rec_alpha),
        beta=np.asarray(rec_beta),
        err=np.asarray(rec_err),
        lo=np.asarray(rec_lo),
        hi=np.asarray(rec_hi),
        width=np.asarray(rec_width),
        eta=np.asarray(rec_eta),
        selected=np.asarray(rec_sel, dtype=np.int64),
        unit=np.asarray(rec_unit, dtype=object),
        expert_alpha=np.asarray(rec_bank) if rec_bank else None,
        mean_alpha=np.asarray(rec_mean),
    )
    report = compute_metrics(
        table.mean_alpha,
        table.err,
        target_alpha=config.alpha,
        t=table.t,
        widths=table.width,
        bins=config.bins,
        local_window=LOCAL_WINDOW_PANEL if config.local_window is None else config.local_window,
        min_bin_count=config.min_bin_count,
        local_series=np.asarray(time_err_mean),
        local_series_t=np.asarray(time_values, dtype=np.int64),
        counters=counters,
    )
    return table, report
