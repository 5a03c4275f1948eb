"""Request and response schemas for the HTTP service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..runner import ExperimentConfig


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ConfigModel(StrictModel):
    """Wire form of the experiment configuration; unset fields take library defaults."""

    alpha: float | None = None
    algorithm: str | None = None
    gammas: list[float] | None = None
    interval_length: int | None = None
    eta_mode: str | None = None
    fixed_eta: float | None = None
    sigma: float | None = None
    eta_scale: float | None = None
    window_capacity: int | None = None
    score_kind: str | None = None
    seed: int | None = None
    bins: int | None = None
    min_bin_count: int | None = None
    local_window: int | None = None
    record_experts: bool | None = None

    def to_config(self) -> ExperimentConfig:
        raw = {k: v for k, v in self.model_dump().items() if v is not None}
        return ExperimentConfig.from_dict(raw)


class SegmentModel(StrictModel):
    length: int
    alpha_star: float
    law: Literal["warp", "uniform", "knots"] = "warp"
    knots: list[tuple[float, float]] | None = None


class StreamModel(StrictModel):
    kind: Literal["beta", "score", "series", "panel"]
    csv: str


class RunRequest(StrictModel):
    config: ConfigModel = Field(default_factory=ConfigModel)
    stream: StreamModel | None = None
    segments: list[SegmentModel] | None = None

    @model_validator(mode="after")
    def _one_source(self) -> "RunRequest":
        if (self.stream is None) == (self.segments is None):
            raise ValueError("provide exactly one of 'stream' and 'segments'")
        return self


class PanelRequest(StrictModel):
    config: ConfigModel = Field(default_factory=ConfigModel)
    csv: str


class RunResponse(StrictModel):
    n_steps: int
    steps_csv: str
    report: dict


class GarchSimModel(StrictModel):
    omega: float = 0.05
    tau: float = 0.1
    lam: float = 0.85
    n: int = 6000
    window: int = 1250
    stride: int = 5
    maxiter: int = 2000


class PanelSimModel(StrictModel):
    n_units: int = 20
    length: int = 120


class SimulateRequest(StrictModel):
    kind: Literal["beta", "garch", "panel"]
    seed: int = 0
    alpha: float = 0.1
    segments: list[SegmentModel] | None = None
    garch: GarchSimModel | None = None
    panel: PanelSimModel | None = None


class SimulateResponse(StrictModel):
    kind: str
    n_rows: int
    csv: str
    meta: dict


class MetricsRequest(StrictModel):
    steps_csv: str
    alpha: float
    bins: int = 10
    local_window: int = 500
    min_bin_count: int = 30


class DynamicRegretModel(StrictModel):
    interval_length: int
    k: int
    sigma: float
    eta: float
    sum_sq_losses: float
    path_length: float
    gamma_max: float
    gamma_min: float


class LongTermCoverageModel(StrictModel):
    n_steps: int
    gamma_min: float
    gamma_max: float
    etas: list[float]
    sigmas: list[float]


class BoundsRequest(StrictModel):
    dynamic_regret: DynamicRegretModel | None = None
    long_term_coverage: LongTermCoverageModel | None = None

    @model_validator(mode="after")
    def _at_least_one(self) -> "BoundsRequest":
        if self.dynamic_regret is None and self.long_term_coverage is None:
            raise ValueError("request at least one bound")
        return self


class SessionCreateRequest(StrictModel):
    config: ConfigModel = Field(default_factory=ConfigModel)
    warmup_scores: list[float] | None = None


class SessionCreateResponse(StrictModel):
    session_id: str
    algorithm: str
    alpha: float


class SessionStepRequest(StrictModel):
    betas: list[float] | None = None
    scores: list[float] | None = None

    @model_validator(mode="after")
    def _one_source(self) -> "SessionStepRequest":
        if (self.betas is None) == (self.scores is None):
            raise ValueError("provide exactly one of 'betas' and 'scores'")
        return self


class SessionStepResponse(StrictModel):
    n_evaluated: int
    n_absorbed: int
    alpha_t: list[float]
    beta_t: list[float]
    err_t: list[float]
