"""Exact finite-n steady state of the truncated age chain.

The state of an n-source network is the vector of ages, each capped at the
threshold gamma. A state is recurrent iff its below-threshold ages are
pairwise distinct, and all recurrent states with the same number m of active
(age == gamma) sources are equiprobable. The total mass P_m of those states
follows a closed-form ratio recursion, evaluated here in the log domain so
that n in the thousands does not overflow.

enumerate_stationary() builds the full transition matrix over recurrent
states and solves it by power iteration. It is the brute-force oracle the
closed form is checked against and is only usable for tiny n.
"""

import itertools
import logging
import math
from taloha._compat import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import sparse
from scipy.special import gammaln, logsumexp

from taloha.core.asymptotics import pivot_chain_aoi
from taloha.core.config import settings
from taloha.core.errors import ConvergenceError, DomainError, StateSpaceTooLargeError
from taloha.core.model import ActivePmf, PolicyParams, Purpose, validate_policy
from taloha.lib.metrics import tracked

logger = logging.getLogger(__name__)


class TruncatedState(BaseModel):
    """Age vector with every entry capped at gamma."""

    model_config = ConfigDict(frozen=True)

    ages: tuple[int, ...] = Field(min_length=1)
    gamma: int = Field(ge=1)

    @model_validator(mode="after")
    def check_range(self) -> Self:
        if any(not 1 <= a <= self.gamma for a in self.ages):
            raise ValueError(f"ages must lie in [1, {self.gamma}]: {self.ages}")
        return self

    @property
    def state_type(self) -> "StateType":
        below = tuple(sorted(a for a in self.ages if a < self.gamma))
        return StateType(m=len(self.ages) - len(below), below=below)


class StateType(BaseModel):
    """Number of active sources plus the multiset of below-threshold ages."""

    model_config = ConfigDict(frozen=True)

    m: int = Field(ge=0)
    below: tuple[int, ...]


def is_recurrent(state: TruncatedState) -> bool:
    """True iff all entries below gamma are pairwise distinct."""
    below = [a for a in state.ages if a < state.gamma]
    return len(below) == len(set(below))


# =============================================================================
# CLOSED FORM
# =============================================================================


def _log_pm_ratio(params: PolicyParams, m: np.ndarray) -> np.ndarray:
    """log(P_m / P_{m-1}) for an array of m values in 1..n."""
    n, gamma, tau = params.n, params.gamma, params.tau
    m = np.asarray(m, dtype=float)
    log1m_tau = math.log1p(-tau)
    # (m-1) tau (1-tau)^(m-2) is the single-success probability among m-1 sources
    single = np.where(m > 1, (m - 1) * tau * np.exp((m - 2) * log1m_tau), 0.0)
    return (
        np.log1p(-single)
        + np.log(n - m + 1)
        - np.log(m)
        - math.log(tau)
        - (m - 1) * log1m_tau
        - np.log(gamma - 1 - n + m)
    )


def pm_ratio(params: PolicyParams, m: int) -> float:
    """P_m / P_{m-1} of the truncated chain."""
    if not 1 <= m <= params.n:
        raise DomainError(f"m out of range: need 1 <= m <= n={params.n}, got {m}")
    factor = params.gamma - 1 - params.n + m
    if factor <= 0:
        raise DomainError(f"gamma-1-n+m <= 0 (got {factor} at m={m})")
    return float(np.exp(_log_pm_ratio(params, np.array([m]))[0]))


def log_ratio_sequence(params: PolicyParams) -> np.ndarray:
    """log P_m - log P_{m-1} for m = 1..n, the finite-n counterpart of f."""
    validate_policy(params, Purpose.EXACT_ANALYSIS)
    return _log_pm_ratio(params, np.arange(1, params.n + 1))


@tracked("active_pmf")
def active_pmf(params: PolicyParams) -> ActivePmf:
    """Steady-state distribution of the number of active sources."""
    log_unnorm = np.concatenate(([0.0], np.cumsum(log_ratio_sequence(params))))
    log_p = log_unnorm - logsumexp(log_unnorm)
    return ActivePmf(n=params.n, log_p=tuple(float(v) for v in log_p), support_min=0)


def log_state_count(params: PolicyParams, m: int) -> float:
    """log N_m, N_m = C(n, m) (gamma-1)! / (gamma-n-1+m)!."""
    validate_policy(params, Purpose.EXACT_ANALYSIS)
    if not 0 <= m <= params.n:
        raise DomainError(f"m out of range: need 0 <= m <= n={params.n}, got {m}")
    n, gamma = params.n, params.gamma
    return float(
        gammaln(n + 1)
        - gammaln(m + 1)
        - gammaln(n - m + 1)
        + gammaln(gamma)
        - gammaln(gamma - n + m)
    )


def state_count(params: PolicyParams, m: int) -> int:
    """Number N_m of recurrent states with exactly m active sources."""
    validate_policy(params, Purpose.EXACT_ANALYSIS)
    if not 0 <= m <= params.n:
        raise DomainError(f"m out of range: need 0 <= m <= n={params.n}, got {m}")
    return math.comb(params.n, m) * math.perm(params.gamma - 1, params.n - m)


def per_state_probability(params: PolicyParams, m: int) -> float:
    """Stationary probability pi_m of one recurrent state with m active sources."""
    if not 0 <= m <= params.n:
        raise DomainError(f"m out of range: need 0 <= m <= n={params.n}, got {m}")
    pmf = active_pmf(params)
    return math.exp(pmf.log_p[m] - log_state_count(params, m))


def success_prob_q0(pmf: ActivePmf, tau: float) -> float:
    """Probability that a given active source succeeds in a slot.

    The m = 0 term uses exponent 0, i.e. max(m-1, 0) other active sources.
    """
    m = np.arange(pmf.n + 1)
    log_terms = (
        np.asarray(pmf.log_p) + math.log(tau) + np.maximum(m - 1, 0) * math.log1p(-tau)
    )
    return math.fsum(np.exp(log_terms).tolist())


def pmf_mean(pmf: ActivePmf) -> float:
    return float(np.dot(np.arange(pmf.n + 1), pmf.p))


def pmf_mode(pmf: ActivePmf) -> int:
    return int(np.argmax(pmf.log_p))


def pmf_local_maxima(pmf: ActivePmf) -> list[int]:
    """Indices m where P_m exceeds P_{m-1} and is not below P_{m+1}.

    A plateau counts once, at its left end.
    """
    padded = np.concatenate(([-np.inf], np.asarray(pmf.log_p), [-np.inf]))
    return [
        m
        for m in range(pmf.n + 1)
        if padded[m + 1] > padded[m] and padded[m + 1] >= padded[m + 2]
    ]


def finite_aoi_estimate(params: PolicyParams) -> float:
    """Pivot-chain AoI with q0 taken from the exact active-count PMF."""
    q0 = success_prob_q0(active_pmf(params), params.tau)
    return pivot_chain_aoi(params.gamma, q0)


# =============================================================================
# ENUMERATION ORACLE
# =============================================================================


class StationaryDistribution(BaseModel):
    """Stationary vector of the truncated chain over its recurrent states."""

    model_config = ConfigDict(frozen=True)

    params: PolicyParams
    states: tuple[tuple[int, ...], ...]
    probabilities: tuple[float, ...]
    iterations: int
    residue: float = Field(description="L1 norm of pi P - pi at the returned vector")

    def probability(self, ages: tuple[int, ...]) -> float:
        """Stationary probability of an age vector; transient states get 0."""
        index = {s: i for i, s in enumerate(self.states)}
        i = index.get(tuple(ages))
        return 0.0 if i is None else self.probabilities[i]

    def as_mapping(self) -> dict[TruncatedState, float]:
        gamma = self.params.gamma
        return {
            TruncatedState(ages=s, gamma=gamma): p
            for s, p in zip(self.states, self.probabilities)
        }

    def active_counts(self) -> np.ndarray:
        gamma = self.params.gamma
        return np.array([sum(a == gamma for a in s) for s in self.states], dtype=int)

    def active_marginal(self) -> np.ndarray:
        """Total probability of states with m active sources, m = 0..n."""
        return np.bincount(
            self.active_counts(),
            weights=np.asarray(self.probabilities),
            minlength=self.params.n + 1,
        )


def _recurrent_states(params: PolicyParams) -> list[tuple[int, ...]]:
    """All age vectors whose below-threshold entries are distinct, sorted."""
    n, gamma = params.n, params.gamma
    states: list[tuple[int, ...]] = []
    for m in range(n + 1):
        for active in itertools.combinations(range(n), m):
            idle = [i for i in range(n) if i not in active]
            for below in itertools.permutations(range(1, gamma), n - m):
                ages = [gamma] * n
                for i, a in zip(idle, below):
                    ages[i] = a
                states.append(tuple(ages))
    states.sort()
    return states


def _transition_matrix(
    params: PolicyParams, states: list[tuple[int, ...]]
) -> sparse.csr_matrix:
    """Row-stochastic transition matrix over the given recurrent states."""
    gamma, tau = params.gamma, params.tau
    index = {s: i for i, s in enumerate(states)}
    rows: list[int] = []
    cols: list[int] = []
    vals: list[float] = []
    for i, s in enumerate(states):
        aged = tuple(min(a + 1, gamma) for a in s)
        active = [j for j, a in enumerate(s) if a == gamma]
        p_win = tau * (1 - tau) ** (len(active) - 1) if active else 0.0
        for j in active:
            nxt = aged[:j] + (1,) + aged[j + 1 :]
            rows.append(i)
            cols.append(index[nxt])
            vals.append(p_win)
        rows.append(i)
        cols.append(index[aged])
        vals.append(1.0 - len(active) * p_win)
    size = len(states)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(size, size))


@tracked("enumerate_stationary")
def enumerate_stationary(params: PolicyParams) -> StationaryDistribution:
    """Solve the truncated chain by brute force over all recurrent states."""
    validate_policy(params, Purpose.EXACT_ANALYSIS)
    total = sum(state_count(params, m) for m in range(params.n + 1))
    if total > settings.oracle_max_states:
        raise StateSpaceTooLargeError(
            f"{total} recurrent states exceed the oracle budget of "
            f"{settings.oracle_max_states}"
        )

    states = _recurrent_states(params)
    transpose = _transition_matrix(params, states).T.tocsr()
    tol = settings.power_iteration_tol
    max_iter = settings.power_iteration_max_iter

    pi = np.full(len(states), 1.0 / len(states))
    diff = math.inf
    for iteration in range(1, max_iter + 1):
        nxt = transpose @ pi
        nxt /= nxt.sum()
        diff = float(np.abs(nxt - pi).sum())
        pi = nxt
        if diff < tol:
            break
    else:
        raise ConvergenceError(
            f"power iteration did not converge in {max_iter} iterations", diff, best=pi
        )

    residue = float(np.abs(transpose @ pi - pi).sum())
    logger.debug(
        "Oracle n=%d gamma=%d tau=%g: %d states, %d iterations, residue %.2e",
        params.n,
        params.gamma,
        params.tau,
        len(states),
        iteration,
        residue,
    )
    return StationaryDistribution(
        params=params,
        states=tuple(states),
        probabilities=tuple(float(v) for v in pi),
        iterations=iteration,
        residue=residue,
    )


class OracleComparison(BaseModel):
    """Closed form versus enumeration for one parameter set."""

    params: PolicyParams
    state_count: int
    closed_form_pmf: list[float]
    oracle_pmf: list[float]
    max_pmf_discrepancy: float
    max_type_spread: float = Field(
        description="Largest probability spread among states with equal active count"
    )
    iterations: int
    residue: float


def compare_with_oracle(params: PolicyParams) -> OracleComparison:
    """Run both solvers and report their largest disagreement."""
    closed = active_pmf(params).p
    oracle = enumerate_stationary(params)
    marginal = oracle.active_marginal()
    counts = oracle.active_counts()
    probs = np.asarray(oracle.probabilities)
    spread = max(float(np.ptp(probs[counts == m])) for m in np.unique(counts))
    return OracleComparison(
        params=params,
        state_count=len(oracle.states),
        closed_form_pmf=closed.tolist(),
        oracle_pmf=marginal.tolist(),
        max_pmf_discrepancy=float(np.max(np.abs(closed - marginal))),
        max_type_spread=spread,
        iterations=oracle.iterations,
        residue=oracle.residue,
    )
