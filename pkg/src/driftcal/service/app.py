"""HTTP wrapper around the library: simulation, runs, metrics, bounds, sessions.

Responses that can carry non-finite floats (interval widths are infinite
whenever the calibration quantile saturates) are serialized by the package's
own JSON writer, which emits `Infinity`/`NaN` literals that `json.loads`
accepts back.
"""

from __future__ import annotations

import threading
import uuid

import numpy as np
from fastapi import FastAPI, Response

from .. import io as dio
from ..conformal import ScoreWindow
from ..garch import GarchParams, garch_simulate, rolling_volatility_forecasts
from ..metrics import compute_metrics
from ..runner import (
    ConfigError,
    ExperimentConfig,
    _UnitLearner,
    run_experiment,
    run_panel,
)
from ..streams import BetaStream, ScoreStream, SegmentSpec, SeriesStream, generate_beta_stream
from ..theory import RegretBoundInputs, dynamic_regret_bound, long_term_coverage_bound
from .models import (
    BoundsRequest,
    GarchSimModel,
    MetricsRequest,
    PanelRequest,
    PanelSimModel,
    RunRequest,
    RunResponse,
    SessionCreateRequest,
    SessionCreateResponse,
    SessionStepRequest,
    SessionStepResponse,
    SimulateRequest,
    SimulateResponse,
)

MAX_SESSIONS = 256

_STREAM_KINDS = {BetaStream: "beta", ScoreStream: "score", SeriesStream: "series"}


def _json(payload: dict, status_code: int = 200) -> Response:
    return Response(content=dio.dumps_json(payload), media_type="application/json", status_code=status_code)


class _Session:
    """One live learner plus its step history."""

    def __init__(self, config: ExperimentConfig) -> None:
        self.config = config
        self.learner = _UnitLearner(config, 0)
        self.window: ScoreWindow | None = None
        self.alphas: list[float] = []
        self.betas: list[float] = []
        self.errs: list[float] = []
        self.means: list[float] = []

    def absorb_scores(self, scores: list[float]) -> tuple[list[float], int]:
        """Split incoming scores into warm-up fills and evaluated levels."""
        if self.window is None:
            self.window = ScoreWindow(self.config.window_capacity)
        betas: list[float] = []
        absorbed = 0
        for s in scores:
            if self.window.is_full:
                betas.append(self.window.count_geq(float(s)) / len(self.window))
            else:
                absorbed += 1
            self.window.push(float(s))
        return betas, absorbed

    def step_betas(self, betas: list[float]) -> SessionStepResponse:
        out_a: list[float] = []
        out_e: list[float] = []
        for b in betas:
            out, err, _, mean_level, _, _ = self.learner.step(float(b))
            out_a.append(out)
            out_e.append(err)
            self.alphas.append(out)
            self.betas.append(float(b))
            self.errs.append(err)
            self.means.append(mean_level)
        return SessionStepResponse(
            n_evaluated=len(betas), n_absorbed=0, alpha_t=out_a, beta_t=list(map(float, betas)), err_t=out_e
        )


def create_app() -> FastAPI:
    from .. import __version__

    app = FastAPI(title="driftcal", version=__version__)
    sessions: dict[str, _Session] = {}
    lock = threading.Lock()

    @app.exception_handler(ConfigError)
    async def _config_error(_, exc: ConfigError):
        return _json({"detail": str(exc), "error": "config"}, status_code=422)

    @app.exception_handler(dio.StreamFormatError)
    async def _format_error(_, exc: dio.StreamFormatError):
        return _json({"detail": str(exc), "error": "format"}, status_code=400)

    @app.exception_handler(ValueError)
    async def _value_error(_, exc: ValueError):
        return _json({"detail": str(exc), "error": "runtime"}, status_code=400)

    @app.get("/health")
    async def health():
        return {"status": "ok", "version": __version__}

    @app.post("/simulate")
    async def simulate(req: SimulateRequest) -> Response:
        if req.kind == "beta":
            if not req.segments:
                raise ValueError("beta simulation needs 'segments'")
            segs = [
                SegmentSpec(
                    length=s.length,
                    alpha_star=s.alpha_star,
                    law=s.law,
                    knots=None if s.knots is None else tuple(tuple(k) for k in s.knots),
                )
                for s in req.segments
            ]
            betas, stars = generate_beta_stream(segs, req.alpha, req.seed)
            csv = dio.beta_csv_text(np.arange(1, betas.size + 1), betas, stars)
            meta = {"alpha": req.alpha, "segments": len(segs), "seed": req.seed}
        elif req.kind == "garch":
            g = req.garch or GarchSimModel()
            params = GarchParams(omega=g.omega, tau=g.tau, lam=g.lam)
            returns, _ = garch_simulate(params, g.n, req.seed)
            days, fc, degraded = rolling_volatility_forecasts(returns, g.window, g.stride, maxiter=g.maxiter)
            csv = dio.series_csv_text(days, returns[days] ** 2, fc)
            meta = {
                "degraded_fits": degraded,
                "window": g.window,
                "stride": g.stride,
                "true_params": {"omega": g.omega, "tau": g.tau, "lam": g.lam},
                "seed": req.seed,
            }
        else:
            from ..streams import synthetic_panel

            p = req.panel or PanelSimModel()
            panel = synthetic_panel(p.n_units, p.length, req.seed)
            csv = dio.panel_csv_text(panel)
            meta = {"n_units": p.n_units, "length": p.length, "seed": req.seed}
        resp = SimulateResponse(kind=req.kind, n_rows=csv.count("\n") - 1, csv=csv, meta=meta)
        return _json(resp.model_dump())

    @app.post("/run")
    async def run(req: RunRequest) -> Response:
        config = req.config.to_config()
        if req.segments is not None:
            segs = [
                SegmentSpec(
                    length=s.length,
                    alpha_star=s.alpha_star,
                    law=s.law,
                    knots=None if s.knots is None else tuple(tuple(k) for k in s.knots),
                )
                for s in req.segments
            ]
            betas, stars = generate_beta_stream(segs, config.alpha, config.seed)
            stream = BetaStream(t=np.arange(1, betas.size + 1), beta=betas, alpha_star=stars)
        else:
            if req.stream.kind == "panel":
                raise ValueError("panel streams go to /panel")
            stream = dio.load_stream(req.stream.csv)
            got = _STREAM_KINDS[type(stream)]
            if got != req.stream.kind:
                raise dio.StreamFormatError(f"stream kind declared {req.stream.kind!r} but the header parses as {got!r}")
        table, report = run_experiment(stream, config)
        resp = RunResponse(n_steps=len(table), steps_csv=dio.steps_csv_text(table), report=report.to_dict())
        return _json(resp.model_dump())

    @app.post("/panel")
    async def panel(req: PanelRequest) -> Response:
        config = req.config.to_config()
        data = dio.load_panel_csv(req.csv)
        table, report = run_panel(data, config)
        resp = RunResponse(n_steps=len(table), steps_csv=dio.steps_csv_text(table), report=report.to_dict())
        return _json(resp.model_dump())

    @app.post("/metrics")
    async def metrics(req: MetricsRequest) -> Response:
        cols = dio.load_steps_csv(req.steps_csv)
        if not 0.0 < req.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {req.alpha}")
        local_series = None
        local_series_t = None
        if "unit" in cols:
            times, inverse = np.unique(cols["t"], return_inverse=True)
            sums = np.bincount(inverse, weights=cols["err_t"])
            counts = np.bincount(inverse)
            local_series = sums / counts
            local_series_t = times
        report = compute_metrics(
            cols["alpha_t"],
            cols["err_t"],
            target_alpha=req.alpha,
            t=cols["t"],
            widths=cols.get("width"),
            bins=req.bins,
            local_window=req.local_window,
            min_bin_count=req.min_bin_count,
            local_series=local_series,
            local_series_t=local_series_t,
        )
        return _json({"report": report.to_dict()})

    @app.post("/bounds")
    async def bounds(req: BoundsRequest) -> Response:
        results: dict[str, float] = {}
        if req.dynamic_regret is not None:
            d = req.dynamic_regret
            results["dynamic_regret"] = dynamic_regret_bound(
                RegretBoundInputs(
                    interval_length=d.interval_length,
                    k=d.k,
                    sigma=d.sigma,
                    eta=d.eta,
                    sum_sq_losses=d.sum_sq_losses,
                    path_length=d.path_length,
                    gamma_max=d.gamma_max,
                    gamma_min=d.gamma_min,
                )
            )
        if req.long_term_coverage is not None:
            c = req.long_term_coverage
            results["long_term_coverage"] = long_term_coverage_bound(
                c.n_steps,
                c.gamma_min,
                c.gamma_max,
                np.asarray(c.etas, dtype=np.float64),
                np.asarray(c.sigmas, dtype=np.float64),
            )
        return _json({"results": results})

    @app.post("/sessions")
    async def create_session(req: SessionCreateRequest) -> Response:
        config = req.config.to_config()
        session = _Session(config)
        if req.warmup_scores:
            session.absorb_scores(req.warmup_scores)
        with lock:
            if len(sessions) >= MAX_SESSIONS:
                return _json({"detail": f"session cap {MAX_SESSIONS} reached", "error": "capacity"}, status_code=409)
            sid = uuid.uuid4().hex
            sessions[sid] = session
        resp = SessionCreateResponse(session_id=sid, algorithm=config.algorithm, alpha=config.alpha)
        return _json(resp.model_dump())

    def _get_session(sid: str) -> _Session | None:
        with lock:
            return sessions.get(sid)

    @app.post("/sessions/{sid}/steps")
    async def session_steps(sid: str, req: SessionStepRequest) -> Response:
        session = _get_session(sid)
        if session is None:
            return _json({"detail": f"unknown session {sid}", "error": "not_found"}, status_code=404)
        if req.betas is not None:
            for b in req.betas:
                if not 0.0 <= b <= 1.0:
                    raise ValueError(f"realized levels must lie in [0, 1], got {b}")
            resp = session.step_betas(req.betas)
        else:
            betas, absorbed = session.absorb_scores(req.scores)
            resp = session.step_betas(betas)
            resp = SessionStepResponse(
                n_evaluated=resp.n_evaluated,
                n_absorbed=absorbed,
                alpha_t=resp.alpha_t,
                beta_t=resp.beta_t,
                err_t=resp.err_t,
            )
        return _json(resp.model_dump())

    @app.get("/sessions/{sid}/report")
    async def session_report(sid: str) -> Response:
        session = _get_session(sid)
        if session is None:
            return _json({"detail": f"unknown session {sid}", "error": "not_found"}, status_code=404)
        cfg = session.config
        if not session.errs:
            raise ValueError("session has no evaluated steps yet")
        report = compute_metrics(
            np.asarray(session.means),
            np.asarray(session.errs),
            target_alpha=cfg.alpha,
            bins=cfg.bins,
            local_window=500 if cfg.local_window is None else cfg.local_window,
            min_bin_count=cfg.min_bin_count,
            counters={"session_steps": len(session.errs)},
        )
        return _json({"report": report.to_dict()})

    @app.delete("/sessions/{sid}")
    async def delete_session(sid: str) -> Response:
        with lock:
            found = sessions.pop(sid, None)
        if found is None:
            return _json({"detail": f"unknown session {sid}", "error": "not_found"}, status_code=404)
        return _json({"deleted": sid})

    return app


app = create_app()
