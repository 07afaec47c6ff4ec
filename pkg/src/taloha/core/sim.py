"""Slot-level Monte Carlo simulation of age-threshold random access.

Each slot every eligible source attempts independently; a slot with exactly
one attempt is a success and resets that source's age at the destination.
Three policies share one slot loop:

- threshold-ALOHA: a source is eligible once its age reaches gamma and then
  attempts with a fixed probability tau.
- slotted ALOHA: threshold-ALOHA with gamma = 1, every source always eligible.
- stabilized thinning: the age threshold of threshold-ALOHA, with the attempt
  probability tuned each slot from a collision-feedback estimate of the
  number of eligible sources.

With exogenous arrivals each source holds only its freshest packet. The
relaxed policy contends on the time since its last success, regardless of
whether a fresh packet has arrived since.

Randomness comes from one numpy SeedSequence per run, spawned into separate
PCG64 streams for initialization, attempt draws and arrivals, so a run is
bit-reproducible from its seed.
"""

import logging
import math
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from typing import Annotated, Literal

from taloha._compat import Self, StrEnum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from taloha.core.asymptotics import classify_regime
from taloha.core.config import settings
from taloha.core.errors import BudgetExceededError, DomainError
from taloha.core.model import (
    AsymptoticParams,
    FeedbackKind,
    PolicyName,
    SimReport,
    SlotFeedback,
    from_asymptotic,
)
from taloha.lib.metrics import tracked

logger = logging.getLogger(__name__)

PROGRESS_CHUNK = 1_000_000


# =============================================================================
# POLICIES
# =============================================================================


class EstimatorParams(BaseModel):
    """Pseudo-Bayesian estimate of the eligible population.

    After an idle or success slot the estimate drops by `decrement`, after a
    collision it rises by `increment`; `arrival_rate` is added either way to
    track sources becoming eligible. Zero arrival rate is the bare rule.
    """

    model_config = ConfigDict(frozen=True)

    decrement: float = Field(default=1.0, gt=0.0)
    increment: float = Field(default=1 / (math.e - 2), gt=0.0)
    floor: float = Field(default=1.0, ge=1.0)
    arrival_rate: float = Field(default=math.exp(-1), ge=0.0)
    initial: float = Field(default=1.0, ge=1.0)


class ThresholdAloha(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["threshold"] = "threshold"
    gamma: int = Field(ge=1)
    tau: float = Field(gt=0.0, le=1.0)


class SlottedAloha(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["slotted"] = "slotted"
    tau: float = Field(gt=0.0, le=1.0)


class StabilizedThinning(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["stabilized"] = "stabilized"
    gamma: int = Field(ge=1)
    estimator: EstimatorParams = Field(default_factory=EstimatorParams)


PolicyVariant = Annotated[
    ThresholdAloha | SlottedAloha | StabilizedThinning, Field(discriminator="kind")
]


class PolicyKind(BaseModel):
    """Access policy plus the optional per-source arrival probability."""

    model_config = ConfigDict(frozen=True)

    variant: PolicyVariant
    arrival_prob: float | None = Field(default=None, gt=0.0, le=1.0)

    @classmethod
    def threshold(cls, gamma: int, tau: float, arrival_prob: float | None = None) -> Self:
        return cls(variant=ThresholdAloha(gamma=gamma, tau=tau), arrival_prob=arrival_prob)

    @classmethod
    def slotted(cls, tau: float, arrival_prob: float | None = None) -> Self:
        return cls(variant=SlottedAloha(tau=tau), arrival_prob=arrival_prob)

    @classmethod
    def stabilized(cls, gamma: int, estimator: EstimatorParams | None = None) -> Self:
        return cls(variant=StabilizedThinning(gamma=gamma, estimator=estimator or EstimatorParams()))

    @property
    def name(self) -> PolicyName:
        return PolicyName(self.variant.kind)

    @property
    def gamma(self) -> int:
        """Eligibility threshold; slotted ALOHA is the gamma = 1 case."""
        if isinstance(self.variant, SlottedAloha):
            return 1
        return self.variant.gamma

    @property
    def has_arrivals(self) -> bool:
        return self.arrival_prob is not None


class InitMode(StrEnum):
    RANDOM_DISTINCT = "random-distinct"
    ALL_ACTIVE = "all-active"


# =============================================================================
# STATE
# =============================================================================


class RandomStreams(BaseModel):
    """Independent generators for initialization, attempts and arrivals."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    init: np.random.Generator
    attempts: np.random.Generator
    arrivals: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> Self:
        children = np.random.SeedSequence(seed).spawn(3)
        init, attempts, arrivals = (np.random.default_rng(s) for s in children)
        return cls(init=init, attempts=attempts, arrivals=arrivals)


class NetworkState(BaseModel):
    """Ages of all sources at the start of a slot."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    dest_age: np.ndarray = Field(description="Age at the destination, >= 1")
    since_success: np.ndarray | None = Field(
        default=None, description="Slots since last success; arrivals mode only"
    )
    source_age: np.ndarray | None = Field(
        default=None, description="Age of the packet held at the source; arrivals mode only"
    )
    slot: int = 0
    estimator: float | None = None

    @model_validator(mode="after")
    def check_ages(self) -> Self:
        if self.dest_age.min(initial=1) < 1:
            raise ValueError("destination ages must be >= 1")
        if (self.source_age is None) != (self.since_success is None):
            raise ValueError("source_age and since_success go together")
        if self.source_age is not None and self.source_age.min(initial=0) < 0:
            raise ValueError("source ages must be >= 0")
        return self

    @property
    def n(self) -> int:
        return int(self.dest_age.size)

    def contention_age(self) -> np.ndarray:
        """Age that decides eligibility: time since last success."""
        return self.dest_age if self.since_success is None else self.since_success


def initial_state(
    policy: PolicyKind, n: int, init: InitMode, streams: RandomStreams
) -> NetworkState:
    """Starting state for a run.

    RANDOM_DISTINCT samples n distinct values from 1..max(gamma, n+1) and
    clamps them at gamma, which lands directly in the recurrent class.
    ALL_ACTIVE puts every source at gamma.
    """
    gamma = policy.gamma
    if init is InitMode.ALL_ACTIVE:
        ages = np.full(n, gamma, dtype=np.int64)
    else:
        pool = np.arange(1, max(gamma, n + 1) + 1, dtype=np.int64)
        ages = np.minimum(streams.init.choice(pool, size=n, replace=False), gamma)

    estimator = None
    if isinstance(policy.variant, StabilizedThinning):
        estimator = policy.variant.estimator.initial

    if policy.arrival_prob is None:
        return NetworkState(dest_age=ages, estimator=estimator)
    source_age = streams.init.geometric(policy.arrival_prob, size=n).astype(np.int64)
    return NetworkState(
        dest_age=ages + source_age,
        since_success=ages.copy(),
        source_age=source_age,
        estimator=estimator,
    )


# =============================================================================
# SLOT DYNAMICS
# =============================================================================


def _estimator_next(m_hat: float, collided: bool, params: EstimatorParams) -> float:
    if collided:
        return m_hat + params.increment + params.arrival_rate
    return max(params.floor, m_hat - params.decrement + params.arrival_rate)


def stabilized_estimator_update(
    m_hat: float, feedback: SlotFeedback, params: EstimatorParams | None = None
) -> float:
    """Next estimate of the eligible population after one slot of feedback.

    Without params this is the bare rule: max(1, m - 1) after idle or
    success, m + 1/(e-2) after a collision. Eligible sources then attempt
    with probability min(1, 1/m).
    """
    params = params or EstimatorParams(arrival_rate=0.0)
    if m_hat < params.floor:
        raise DomainError(f"estimate must be >= {params.floor}, got {m_hat}")
    return _estimator_next(m_hat, feedback.kind is FeedbackKind.COLLISION, params)


def _attempt_prob(policy: PolicyKind, state: NetworkState) -> float:
    match policy.variant:
        case ThresholdAloha(tau=tau) | SlottedAloha(tau=tau):
            return tau
        case StabilizedThinning():
            assert state.estimator is not None
            return min(1.0, 1.0 / state.estimator)


def _advance(
    state: NetworkState, policy: PolicyKind, streams: RandomStreams
) -> tuple[int, int, int]:
    """Play one slot in place; return (winner or -1, attempts, eligible count)."""
    active = np.flatnonzero(state.contention_age() >= policy.gamma)
    draws = streams.attempts.random(active.size)
    attempters = active[draws < _attempt_prob(policy, state)]
    winner = int(attempters[0]) if attempters.size == 1 else -1

    if state.source_age is None:
        state.dest_age += 1
        if winner >= 0:
            state.dest_age[winner] = 1
    else:
        assert state.since_success is not None and policy.arrival_prob is not None
        delivered = state.source_age[winner] + 1 if winner >= 0 else 0
        state.dest_age += 1
        state.since_success += 1
        if winner >= 0:
            state.dest_age[winner] = delivered
            state.since_success[winner] = 1
        arrived = streams.arrivals.random(state.n) < policy.arrival_prob
        state.source_age += 1
        state.source_age[arrived] = 1

    if isinstance(policy.variant, StabilizedThinning):
        assert state.estimator is not None
        state.estimator = _estimator_next(
            state.estimator, attempters.size >= 2, policy.variant.estimator
        )
    state.slot += 1
    return winner, int(attempters.size), int(active.size)


def step(
    state: NetworkState, policy: PolicyKind, streams: RandomStreams
) -> tuple[NetworkState, SlotFeedback]:
    """Advance a copy of state by one slot and report the channel outcome."""
    following = state.model_copy(deep=True)
    winner, attempts, _ = _advance(following, policy, streams)
    if winner >= 0:
        feedback = SlotFeedback.success(winner)
    elif attempts == 0:
        feedback = SlotFeedback.idle()
    else:
        feedback = SlotFeedback.collision(attempts)
    return following, feedback


# =============================================================================
# RUNS
# =============================================================================


def default_warmup(policy: PolicyKind) -> int:
    return max(10 * policy.gamma, settings.warmup_floor)


@tracked("simulate")
def simulate(
    policy: PolicyKind,
    n: int,
    slots: int,
    warmup: int | None = None,
    seed: int = 0,
    init: InitMode = InitMode.RANDOM_DISTINCT,
) -> SimReport:
    """Run warmup + slots slots and report statistics of the last `slots`.

    Ages are sampled at the start of each slot, so a source that succeeds
    every slot has average age 1.
    """
    warmup = default_warmup(policy) if warmup is None else warmup
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    if warmup < 0 or slots <= warmup:
        raise DomainError(f"need slots > warmup >= 0, got slots={slots}, warmup={warmup}")
    work = n * (warmup + slots)
    if work > settings.max_sim_work:
        raise BudgetExceededError(
            f"n * (warmup + slots) = {work:.3e} exceeds budget {settings.max_sim_work:.3e}"
        )

    streams = RandomStreams.from_seed(seed)
    state = initial_state(policy, n, init, streams)
    logger.info(
        "Simulating %s n=%d gamma=%d: %d warmup + %d slots (seed=%d)",
        policy.name,
        n,
        policy.gamma,
        warmup,
        slots,
        seed,
    )

    for _ in range(warmup):
        _advance(state, policy, streams)

    age_sum = np.zeros(n, dtype=np.float64)
    ta_sum = np.zeros(n, dtype=np.float64) if policy.has_arrivals else None
    active_hist = np.zeros(n + 1, dtype=np.int64)
    successes = 0
    attempts_total = 0
    listens_always = isinstance(policy.variant, StabilizedThinning)

    for t in range(slots):
        age_sum += state.dest_age
        if ta_sum is not None:
            ta_sum += state.since_success
        winner, attempts, active = _advance(state, policy, streams)
        active_hist[active] += 1
        attempts_total += attempts
        successes += int(winner >= 0)
        if (t + 1) % PROGRESS_CHUNK == 0:
            logger.info("  %d / %d slots, %d successes", t + 1, slots, successes)

    avg_age = age_sum / slots
    avg_ta = None if ta_sum is None else ta_sum / slots
    report = SimReport(
        policy=str(policy.name),
        n=n,
        avg_aoi_per_source=avg_age.tolist(),
        network_avg_aoi=float(avg_age.mean()),
        throughput=successes / slots,
        success_count=successes,
        active_fraction_mean=float(np.arange(n + 1) @ active_hist) / (n * slots),
        active_fraction_pmf=(active_hist / slots).tolist(),
        tx_events_per_slot=attempts_total / slots,
        rx_events_per_slot=float(n) if listens_always else attempts_total / slots,
        slots_simulated=slots,
        warmup_slots=warmup,
        seed=seed,
        arrival_prob=policy.arrival_prob,
        avg_ta_aoi_per_source=None if avg_ta is None else avg_ta.tolist(),
        network_avg_ta_aoi=None if avg_ta is None else float(avg_ta.mean()),
    )
    logger.info(
        "Done: aoi/n=%.4f throughput=%.4f active fraction=%.4f",
        report.network_avg_aoi / n,
        report.throughput,
        report.active_fraction_mean,
    )
    return report


def simulate_arrivals(
    policy: PolicyKind,
    n: int,
    slots: int,
    warmup: int | None = None,
    seed: int = 0,
) -> SimReport:
    """Run the relaxed policy with exogenous arrivals.

    The report carries both the destination AoI and the average time since
    last success; their difference estimates the mean age of the packet
    held at the source, 1/lambda.
    """
    if policy.arrival_prob is None:
        raise DomainError("simulate_arrivals needs a policy with arrival_prob set")
    return simulate(policy, n, slots, warmup, seed, InitMode.RANDOM_DISTINCT)


# =============================================================================
# CONCENTRATION
# =============================================================================


class ConcentrationPoint(BaseModel):
    """Empirical mass of the active fraction near k* at one network size."""

    n: int
    gamma: int
    tau: float
    k_star: float
    c: float
    epsilon: float = Field(description="Window half-width c * n^(-1/3)")
    probability: float = Field(ge=0.0)
    report: SimReport


def window_probability(
    pmf: Sequence[float], k_star: float, c: float, slots: int | None = None
) -> float:
    """Mass of active counts m with |m/n - k*| < c n^(-1/3).

    With `slots`, pmf holds empirical frequencies over that many slots and
    the mass is counted in slots, so a window holding every slot gives 1.
    """
    n = len(pmf) - 1
    m = np.arange(n + 1)
    inside = np.abs(m / n - k_star) < c * n ** (-1 / 3)
    values = np.asarray(pmf, dtype=float)
    if slots is not None:
        return int(np.rint(values[inside] * slots).sum()) / slots
    return math.fsum(values[inside].tolist())


def concentration_test(
    p: AsymptoticParams,
    n_list: Sequence[int],
    c: float = 1.0,
    slots: int = 1_000_000,
    seed: int = 0,
    warmup: int | None = None,
    init: InitMode = InitMode.RANDOM_DISTINCT,
) -> list[ConcentrationPoint]:
    """Estimate Pr(|m/n - k*| < c n^(-1/3)) for each n in n_list.

    gamma = round(r n) and tau = alpha / n; k* is the root selected by
    classify_regime.
    """
    if c <= 0:
        raise DomainError(f"c must be > 0, got {c}")
    k_star = classify_regime(p).k_star
    assert k_star is not None
    points: list[ConcentrationPoint] = []
    for n in n_list:
        params = from_asymptotic(p, n)
        report = simulate(PolicyKind.threshold(params.gamma, params.tau), n, slots, warmup, seed, init)
        probability = window_probability(
            report.active_fraction_pmf, k_star, c, report.slots_simulated
        )
        logger.info("Concentration n=%d: Pr = %.4f", n, probability)
        points.append(
            ConcentrationPoint(
                n=n,
                gamma=params.gamma,
                tau=params.tau,
                k_star=k_star,
                c=c,
                epsilon=c * n ** (-1 / 3),
                probability=probability,
                report=report,
            )
        )
    return points


# =============================================================================
# REPLICATIONS
# =============================================================================


class SimConfig(BaseModel):
    """Everything that determines one simulation run."""

    model_config = ConfigDict(frozen=True)

    policy: PolicyKind
    n: int = Field(ge=1)
    slots: int = Field(gt=0)
    warmup: int | None = Field(default=None, ge=0)
    seed: int = 0
    init: InitMode = InitMode.RANDOM_DISTINCT

    @property
    def key(self) -> tuple[str, int, int]:
        return (str(self.policy.name), self.n, self.seed)


def _run_config(config: SimConfig) -> SimReport:
    return simulate(
        config.policy, config.n, config.slots, config.warmup, config.seed, config.init
    )


def run_replications(
    configs: Sequence[SimConfig], jobs: int | None = None
) -> list[tuple[SimConfig, SimReport]]:
    """Run independent simulations, in worker processes when jobs > 1.

    Results are sorted by (policy, n, seed), never by completion order.
    """
    jobs = jobs or settings.jobs
    ordered = sorted(configs, key=lambda c: c.key)
    if jobs <= 1 or len(ordered) <= 1:
        return [(config, _run_config(config)) for config in ordered]

    logger.info("Running %d replications on %d workers", len(ordered), jobs)
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        reports = list(executor.map(_run_config, ordered))
    return list(zip(ordered, reports, strict=True))
