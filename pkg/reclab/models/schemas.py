from enum import Enum
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from reclab.core.config import config


class SystemName(str, Enum):
    fair_coin = "fair-coin"
    bernoulli = "bernoulli"
    markov = "markov"
    golden_mean = "golden-mean"
    full_shift = "full-shift"
    doubling = "doubling"
    tent = "tent"
    gauss = "gauss"


METRIC_SYSTEMS = {SystemName.doubling, SystemName.tent, SystemName.gauss}


# ---------------------------------------------------------------------------
# Descriptors
# ---------------------------------------------------------------------------
class SystemDescriptor(BaseModel):
    kind: SystemName
    params: Dict[str, str] = Field(default_factory=dict)
    rows: Optional[List[List[str]]] = None
    alphabet: Optional[str] = None

    @property
    def is_metric(self) -> bool:
        return self.kind in METRIC_SYSTEMS

    @model_validator(mode="after")
    def _rows_for_markov(self) -> "SystemDescriptor":
        if self.kind is SystemName.markov and not self.rows:
            raise ValueError("markov system needs matrix rows")
        return self


class TargetDescriptor(BaseModel):
    kind: Literal["cylinder", "ball"]
    words: List[str] = Field(default_factory=list)
    eps: Optional[float] = None
    n: Optional[int] = None
    # None: a fresh mu-random center per trial
    center: Optional[float] = None
    approximation_depth: Optional[int] = None

    @model_validator(mode="after")
    def _check_shape(self) -> "TargetDescriptor":
        if self.kind == "cylinder" and not self.words:
            raise ValueError("cylinder target needs at least one word")
        if self.kind == "ball":
            if self.eps is None or self.eps <= 0:
                raise ValueError("eps must be positive")
            if self.n is None or self.n < 1:
                raise ValueError("n must be at least 1")
        return self


class ExperimentConfig(BaseModel):
    system: SystemDescriptor
    target: TargetDescriptor
    t: float
    trials: int = 10_000
    seed: int = 0
    K: Optional[int] = None
    # excluded from serialized reports
    workers: int = Field(default=1, exclude=True)
    centers: int = 1

    @field_validator("t")
    @classmethod
    def _t_positive(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("t must be positive")
        return v

    @field_validator("trials", "workers", "centers")
    @classmethod
    def _at_least_one(cls, v: int, info) -> int:
        if v < 1:
            raise ValueError(f"{info.field_name} must be at least 1")
        return v

    @field_validator("K")
    @classmethod
    def _cap(cls, v: Optional[int]) -> Optional[int]:
        if v is not None and v < 0:
            raise ValueError("K must be non-negative")
        return v


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------
class DistributionOut(BaseModel):
    probs: List[float]
    overflow: float
    overflow_mean: float


class DeviationRow(BaseModel):
    k: int
    emp: float
    exact: Optional[float] = None
    poisson: float
    sigma: float
    z: float


class ChenSteinBound(BaseModel):
    mu_a: float
    tau_a: int
    m: int
    t: float
    delta_star: int
    value: float
    alpha_term: float
    gap_term: float
    short_return_term: float
    log_factor: float
    c1: float = 1.0
    scanned: int
    truncated: bool = False


class CenterRecord(BaseModel):
    center: float
    mu_hat: float
    m: int
    mean: float


class ApproximationComparison(BaseModel):
    N: int
    mu_inner: float
    m_inner: int
    theta_hat: float
    hit_gap_bound: float
    max_gap: float
    inner_empirical: DistributionOut


class ExperimentReport(BaseModel):
    schema_version: str = config.SCHEMA_VERSION
    experiment: ExperimentConfig
    m: int
    mu_hat: float
    K: int
    empirical: DistributionOut
    exact: Optional[DistributionOut] = None
    poisson: DistributionOut
    tv_emp_poisson: float
    tv_exact_poisson: Optional[float] = None
    tv_emp_exact: Optional[float] = None
    deviations: List[DeviationRow]
    mean_emp: float
    mean_stderr: float
    mean_expected: float
    period: Optional[int] = None
    chen_stein: Optional[ChenSteinBound] = None
    centers: Optional[List[CenterRecord]] = None
    approximation: Optional[ApproximationComparison] = None


class SummaryRow(BaseModel):
    n: Optional[int] = None
    m: int
    mu_hat: float
    t: float
    tv_emp_poisson: float
    tv_exact_poisson: Optional[float] = None
    max_z: float
    chen_stein_value: Optional[float] = None


# ---------------------------------------------------------------------------
# Command summaries
# ---------------------------------------------------------------------------
class CommandSummary(BaseModel):
    schema_version: str = config.SCHEMA_VERSION
    command: str
    parameters: Dict[str, Any]


class PoissonCheckSummary(CommandSummary):
    rows: List[SummaryRow]
    reports: List[ExperimentReport]


class PeriodRow(BaseModel):
    n: int
    center: float
    # sampled mode: an uncertified upper bound, None when nothing returned
    tau: Optional[int] = None
    tau_over_n: Optional[float] = None
    certified: bool = True


class PeriodScanSummary(CommandSummary):
    rows: List[PeriodRow]
    median_tau_over_n: Dict[str, float]


class EntropyRow(BaseModel):
    n: int
    center: float
    brin_katok: float
    varandas: Optional[float] = None
    recurrence: Optional[int] = None


class EntropySummary(CommandSummary):
    entropy: float
    rows: List[EntropyRow]


class SteinBoundRow(BaseModel):
    n: int
    word: str
    m: int
    mu_a: float
    tau_a: int
    tv_exact_poisson: float
    bound: float
    delta_star: int
    ratio: float


class SteinBoundSummary(CommandSummary):
    rows: List[SteinBoundRow]
    bounds: List[ChenSteinBound]


class ApproxRow(BaseModel):
    n: int
    N: int
    mu_ball: float
    mu_inner: float
    mu_boundary: float
    theta_hat: float
    hit_gap_bound: float


class ApproxGapSummary(CommandSummary):
    rows: List[ApproxRow]
    psi: Dict[str, float]


class ClusterRow(BaseModel):
    n: int
    intersecting: int
    entropy_envelope: float
    cluster_size: Optional[int] = None
    # float: the binomial sum leaves the 64-bit range for large n
    lambda_bound: float
    lambda_growth_rate: float


class ClusterCountSummary(CommandSummary):
    rows: List[ClusterRow]


class MixingRow(BaseModel):
    k: int
    kind: str
    lower: float
    upper: float
    exact: bool


class MixingSummary(CommandSummary):
    rows: List[MixingRow]


class RunManifest(BaseModel):
    schema_version: str = config.SCHEMA_VERSION
    command: str
    argv: List[str]
    resolved_config: Dict[str, Any]
    outputs: List[str]
    seed: Optional[int] = None
    tool_version: str = config.TOOL_VERSION
    wall_clock_seconds: float = 0.0


SUMMARY_MODELS: Dict[str, type[BaseModel]] = {
    "poisson-check": PoissonCheckSummary,
    "period-scan": PeriodScanSummary,
    "entropy": EntropySummary,
    "stein-bound": SteinBoundSummary,
    "approx-gap": ApproxGapSummary,
    "cluster-count": ClusterCountSummary,
    "mixing": MixingSummary,
    "manifest": RunManifest,
}
