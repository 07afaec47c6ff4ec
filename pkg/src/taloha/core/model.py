"""Shared domain types and validation.

Every analysis and simulation module exchanges these models. They are frozen
pydantic models, so instances are immutable after construction and can be
shared freely across threads and worker processes.

Units are slots throughout. Real values are double precision; the exact
analysis keeps probabilities in the log domain (see ActivePmf).
"""

import math
from taloha._compat import StrEnum
from taloha._compat import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from taloha.core.errors import DomainError

_PMF_SUM_TOL = 1e-12
_RATIO_REL_TOL = 1e-10


class PolicyName(StrEnum):
    """Which access policy a parameter set drives."""

    THRESHOLD = "threshold"
    SLOTTED = "slotted"
    STABILIZED = "stabilized"


class Purpose(StrEnum):
    """What a parameter set is about to be used for."""

    SIMULATION = "simulation"
    EXACT_ANALYSIS = "exact"


class Regime(StrEnum):
    """Which peak of the active-count distribution the network settles on."""

    SINGLE_PEAK = "single-peak"
    DOUBLE_PEAK_LOWER = "double-peak-lower"
    DOUBLE_PEAK_UPPER = "double-peak-upper"

    @property
    def is_double(self) -> bool:
        return self is not Regime.SINGLE_PEAK


class FeedbackKind(StrEnum):
    IDLE = "idle"
    SUCCESS = "success"
    COLLISION = "collision"


# =============================================================================
# PARAMETERS
# =============================================================================


class PolicyParams(BaseModel):
    """Finite-n policy: n sources, age threshold gamma, attempt probability tau."""

    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=1, description="Number of sources")
    gamma: int = Field(ge=1, description="Age threshold, slots")
    tau: float = Field(gt=0.0, lt=1.0, description="Per-slot attempt probability")
    kind: PolicyName = Field(
        default=PolicyName.THRESHOLD, description="Policy these parameters drive"
    )


class AsymptoticParams(BaseModel):
    """Scaled parameters r = gamma/n and alpha = n*tau.

    The fraction of active sources k = m/n is the free variable of f.
    Construction only requires r, alpha > 0; the asymptotic analysis itself
    needs r > 1 and checks it through require_analyzable().
    """

    model_config = ConfigDict(frozen=True)

    r: float = Field(gt=0.0, description="Threshold scale gamma/n")
    alpha: float = Field(gt=0.0, description="Attempt-rate scale n*tau")

    def require_analyzable(self) -> Self:
        """Raise DomainError unless f is defined on all of (0, 1)."""
        if not self.r > 1.0:
            raise DomainError(f"r <= 1: asymptotic analysis needs r > 1 (got r={self.r})")
        return self


# =============================================================================
# DISTRIBUTIONS AND ROOTS
# =============================================================================


class ActivePmf(BaseModel):
    """Distribution of the number of active sources m = 0..n, log domain."""

    model_config = ConfigDict(frozen=True)

    n: int = Field(ge=1)
    log_p: tuple[float, ...] = Field(description="log P_m for m = 0..n")
    support_min: int = Field(ge=0, description="Smallest m with P_m > 0")

    @model_validator(mode="after")
    def check_distribution(self) -> Self:
        if len(self.log_p) != self.n + 1:
            raise ValueError(f"log_p has {len(self.log_p)} entries, expected n+1={self.n + 1}")
        if any(v != -math.inf for v in self.log_p[: self.support_min]):
            raise ValueError("entries below support_min must have zero probability")
        total = math.fsum(math.exp(v) for v in self.log_p)
        if abs(total - 1.0) > _PMF_SUM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        return self

    @property
    def p(self) -> np.ndarray:
        """Linear-domain probabilities P_0..P_n."""
        return np.exp(np.asarray(self.log_p, dtype=float))

    @classmethod
    def point_mass(cls, n: int, m: int) -> Self:
        """Degenerate distribution concentrated on m active sources."""
        log_p = [-math.inf] * (n + 1)
        log_p[m] = 0.0
        return cls(n=n, log_p=tuple(log_p), support_min=m)


class RootAnalysis(BaseModel):
    """Roots of f in (0, 1), with the regime and selected root once classified."""

    model_config = ConfigDict(frozen=True)

    roots: tuple[float, ...]
    regime: Regime | None = None
    k_star: float | None = None
    integral_value: float | None = Field(
        default=None, description="Integral of f over [k0, k2] when three roots exist"
    )

    @model_validator(mode="after")
    def check_roots(self) -> Self:
        if not 1 <= len(self.roots) <= 3:
            raise ValueError(f"expected 1 to 3 roots, got {len(self.roots)}")
        if any(not 0.0 < k < 1.0 for k in self.roots):
            raise ValueError("roots must lie in (0, 1)")
        if any(b <= a for a, b in zip(self.roots, self.roots[1:])):
            raise ValueError("roots must be strictly increasing")
        if self.regime is not None:
            if self.regime.is_double != (len(self.roots) == 3):
                raise ValueError(f"regime {self.regime} inconsistent with {len(self.roots)} roots")
            if self.k_star not in self.roots:
                raise ValueError("k_star must be one of the roots")
        return self


# =============================================================================
# SIMULATION RECORDS
# =============================================================================


class SlotFeedback(BaseModel):
    """Channel outcome of one slot."""

    model_config = ConfigDict(frozen=True)

    kind: FeedbackKind
    source: int | None = Field(default=None, description="Winner of a Success slot")
    attempts: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def check_shape(self) -> Self:
        match self.kind:
            case FeedbackKind.IDLE:
                ok = self.attempts == 0 and self.source is None
            case FeedbackKind.SUCCESS:
                ok = self.attempts == 1 and self.source is not None
            case FeedbackKind.COLLISION:
                ok = self.attempts >= 2 and self.source is None
        if not ok:
            raise ValueError(f"inconsistent feedback: {self.kind} with {self.attempts} attempts")
        return self

    @classmethod
    def idle(cls) -> Self:
        return cls(kind=FeedbackKind.IDLE)

    @classmethod
    def success(cls, source: int) -> Self:
        return cls(kind=FeedbackKind.SUCCESS, source=source, attempts=1)

    @classmethod
    def collision(cls, attempts: int) -> Self:
        return cls(kind=FeedbackKind.COLLISION, attempts=attempts)


class SimReport(BaseModel):
    """Post-warmup statistics of one simulation run."""

    model_config = ConfigDict(frozen=True)

    policy: str = Field(description="Policy label, e.g. 'threshold'")
    n: int = Field(ge=1)
    avg_aoi_per_source: list[float]
    network_avg_aoi: float = Field(ge=1.0)
    throughput: float = Field(ge=0.0, le=1.0, description="Successes per slot")
    success_count: int = Field(ge=0)
    active_fraction_mean: float = Field(ge=0.0, le=1.0)
    active_fraction_pmf: list[float] = Field(description="Empirical P(m), m = 0..n")
    tx_events_per_slot: float = Field(ge=0.0)
    rx_events_per_slot: float = Field(ge=0.0)
    slots_simulated: int = Field(gt=0)
    warmup_slots: int = Field(ge=0)
    seed: int

    # Exogenous-arrivals decomposition; None in generate-at-will runs
    arrival_prob: float | None = None
    avg_ta_aoi_per_source: list[float] | None = None
    network_avg_ta_aoi: float | None = None

    @model_validator(mode="after")
    def check_accounting(self) -> Self:
        if len(self.avg_aoi_per_source) != self.n:
            raise ValueError("avg_aoi_per_source must have one entry per source")
        if len(self.active_fraction_pmf) != self.n + 1:
            raise ValueError("active_fraction_pmf must cover m = 0..n")
        if abs(math.fsum(self.active_fraction_pmf) - 1.0) > 1e-9:
            raise ValueError("active_fraction_pmf must sum to 1")
        if round(self.throughput * self.slots_simulated) != self.success_count:
            raise ValueError("throughput does not match the success count")
        return self

    @property
    def source_age_offset(self) -> float | None:
        """Network average of delta_i - delta_i^TA, an estimate of E[source age]."""
        if self.network_avg_ta_aoi is None:
            return None
        return self.network_avg_aoi - self.network_avg_ta_aoi


# =============================================================================
# OPERATIONS
# =============================================================================


def round_half_up(x: float) -> int:
    """Round to the nearest integer, halves away from zero for x >= 0."""
    return math.floor(x + 0.5)


def validate_policy(params: PolicyParams, purpose: Purpose) -> PolicyParams:
    """Return params unchanged if they satisfy the constraints of purpose.

    Construction already enforces n >= 1, gamma >= 1 and 0 < tau < 1. Exact
    analysis additionally needs gamma >= n+1: with fewer below-threshold age
    values than idle sources some active counts are infeasible.
    """
    if purpose is Purpose.EXACT_ANALYSIS and params.gamma < params.n + 1:
        raise DomainError(
            f"gamma < n+1: exact analysis needs gamma >= n+1 "
            f"(got n={params.n}, gamma={params.gamma})"
        )
    return params


def to_asymptotic(params: PolicyParams) -> AsymptoticParams:
    """Scale (n, gamma, tau) to (r, alpha) = (gamma/n, n*tau)."""
    return AsymptoticParams(r=params.gamma / params.n, alpha=params.n * params.tau)


def from_asymptotic(
    p: AsymptoticParams, n: int, kind: PolicyName = PolicyName.THRESHOLD
) -> PolicyParams:
    """Reconstruct a finite-n policy: gamma = round(r*n), tau = alpha/n."""
    return PolicyParams(
        n=n, gamma=max(1, round_half_up(p.r * n)), tau=p.alpha / n, kind=kind
    )
