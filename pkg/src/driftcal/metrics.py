"""Coverage diagnostics over step records.

Local coverage is the error-free fraction over a centered window of fixed
even length L, defined only where the whole window fits: the window at
center i (1-based) spans steps i - L/2 + 1 through i + L/2.  Conditional
coverage bins steps by the level in force and reports, per sufficiently
populated bin, both the coverage and the raw error mean together with a
normal-approximation band truncated to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["BinStat", "CoverageReport", "local_coverage", "conditional_coverage", "compute_metrics"]


@dataclass(frozen=True)
class BinStat:
    lo: float
    hi: float
    count: int
    err_mean: float
    coverage: float
    bar_lo: float
    bar_hi: float


@dataclass
class CoverageReport:
    target_alpha: float
    n_steps: int
    coverage: float
    err_mean: float
    mean_width: float | None
    median_width: float | None
    local_window: int
    local_t: np.ndarray
    local_coverage: np.ndarray
    bins: list[BinStat]
    min_bin_count: int
    counters: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "target_alpha": self.target_alpha,
            "n_steps": self.n_steps,
            "coverage": self.coverage,
            "err_mean": self.err_mean,
            "mean_width": self.mean_width,
            "median_width": self.median_width,
            "local_window": self.local_window,
            "local": {
                "t": [int(x) for x in self.local_t],
                "coverage": [float(x) for x in self.local_coverage],
            },
            "conditional": {
                "min_bin_count": self.min_bin_count,
                "bins": [
                    {
                        "lo": b.lo,
                        "hi": b.hi,
                        "count": b.count,
                        "err_mean": b.err_mean,
                        "coverage": b.coverage,
                        "bar_lo": b.bar_lo,
                        "bar_hi": b.bar_hi,
                    }
                    for b in self.bins
                ],
            },
            "counters": dict(self.counters),
        }


def local_coverage(err: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """Centered rolling coverage; returns (1-based centers, values).

    Empty when the stream is shorter than the window.
    """
    if window < 2 or window % 2 != 0:
        raise ValueError(f"local window must be even and >= 2, got {window}")
    e = np.asarray(err, dtype=np.float64)
    n = e.size
    half = window // 2
    if n < window:
        return np.empty(0, dtype=np.int64), np.empty(0)
    c = np.concatenate([[0.0], np.cumsum(e)])
    centers = np.arange(half, n - half + 1, dtype=np.int64)
    sums = c[centers + half] - c[centers - half]
    return centers, 1.0 - sums / window


def conditional_coverage(
    alpha_t: np.ndarray,
    err: np.ndarray,
    bins: int = 10,
    min_bin_count: int = 30,
) -> list[BinStat]:
    """Coverage by level-in-force bin over [0, 1]; out-of-range levels clip to the edge bins."""
    if bins < 1:
        raise ValueError(f"need at least one bin, got {bins}")
    a = np.asarray(alpha_t, dtype=np.float64)
    e = np.asarray(err, dtype=np.float64)
    if a.shape != e.shape:
        raise ValueError("levels and errors must align")
    idx = np.clip(np.floor(a * bins).astype(np.int64), 0, bins - 1)
    out: list[BinStat] = []
    for j in range(bins):
        mask = idx == j
        n = int(mask.sum())
        if n < min_bin_count:
            continue
        p = float(e[mask].mean())
        cov = 1.0 - p
        half = 1.96 * float(np.sqrt(p * (1.0 - p) / n))
        out.append(
            BinStat(
                lo=j / bins,
                hi=(j + 1) / bins,
                count=n,
                err_mean=p,
                coverage=cov,
                bar_lo=max(0.0, cov - half),
                bar_hi=min(1.0, cov + half),
            )
        )
    return out


def compute_metrics(
    alpha_t: np.ndarray,
    err: np.ndarray,
    *,
    target_alpha: float,
    t: np.ndarray | None = None,
    widths: np.ndarray | None = None,
    bins: int = 10,
    local_window: int = 500,
    min_bin_count: int = 30,
    local_series: np.ndarray | None = None,
    local_series_t: np.ndarray | None = None,
    counters: dict | None = None,
) -> CoverageReport:
    """Assemble the full coverage report for one run.

    ``local_series`` overrides the series the local window runs over (the
    panel runner passes per-time cross-sectional error means there); by
    default it is the pooled error sequence itself.
    """
    a = np.asarray(alpha_t, dtype=np.float64)
    e = np.asarray(err, dtype=np.float64)
    if a.shape != e.shape or a.ndim != 1:
        raise ValueError("levels and errors must be one-dimensional and aligned")
    loc_err = e if local_series is None else np.asarray(local_series, dtype=np.float64)
    loc_t_src = t if local_series is None else local_series_t
    centers, loc = local_coverage(loc_err, local_window)
    if loc_t_src is not None and centers.size:
        loc_t = np.asarray(loc_t_src)[centers - 1]
    else:
        loc_t = centers
    mean_w: float | None = None
    median_w: float | None = None
    if widths is not None:
        w = np.asarray(widths, dtype=np.float64)
        finite_or_inf = w[~np.isnan(w)]
        if finite_or_inf.size:
            mean_w = float(finite_or_inf.mean())
            median_w = float(np.median(finite_or_inf))
    err_mean = float(e.mean()) if e.size else 0.0
    return CoverageReport(
        target_alpha=float(target_alpha),
        n_steps=int(e.size),
        coverage=1.0 - err_mean,
        err_mean=err_mean,
        mean_width=mean_w,
        median_width=median_w,
        local_window=int(local_window),
        local_t=np.asarray(loc_t, dtype=np.int64),
        local_coverage=loc,
        bins=conditional_coverage(a, e, bins=bins, min_bin_count=min_bin_count),
        min_bin_count=int(min_bin_count),
        counters=dict(counters or {}),
    )
