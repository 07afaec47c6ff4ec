"""Tests for the slot-level simulator, its baselines and replications."""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from taloha.core.config import settings
from taloha.core.errors import BudgetExceededError, DomainError
from taloha.core.model import FeedbackKind, PolicyName, SlotFeedback
from taloha.core.sim import (
    EstimatorParams,
    InitMode,
    NetworkState,
    PolicyKind,
    RandomStreams,
    SimConfig,
    default_warmup,
    initial_state,
    run_replications,
    simulate,
    simulate_arrivals,
    stabilized_estimator_update,
    step,
    window_probability,
)


class TestPolicyKind:
    """Tests for policy construction."""

    def test_slotted_is_gamma_one(self) -> None:
        policy = PolicyKind.slotted(0.1)

        assert policy.gamma == 1
        assert policy.name is PolicyName.SLOTTED

    def test_round_trips_through_json(self) -> None:
        """The discriminated union survives serialization to worker processes."""
        policy = PolicyKind.stabilized(40)

        assert PolicyKind.model_validate_json(policy.model_dump_json()) == policy

    def test_rejects_bad_arrival_prob(self) -> None:
        with pytest.raises(ValidationError):
            PolicyKind.threshold(4, 0.5, arrival_prob=0.0)

    def test_default_warmup(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setattr(settings, "warmup_floor", 100)

        assert default_warmup(PolicyKind.threshold(50, 0.1)) == 500
        assert default_warmup(PolicyKind.threshold(5, 0.1)) == 100


class TestInitialState:
    """Tests for the starting state of a run."""

    def test_random_distinct_is_recurrent(self) -> None:
        policy = PolicyKind.threshold(8, 0.3)
        state = initial_state(policy, 6, InitMode.RANDOM_DISTINCT, RandomStreams.from_seed(3))
        below = state.dest_age[state.dest_age < 8]

        assert state.dest_age.max() <= 8
        assert len(set(below.tolist())) == below.size

    def test_all_active(self) -> None:
        state = initial_state(
            PolicyKind.threshold(8, 0.3), 5, InitMode.ALL_ACTIVE, RandomStreams.from_seed(0)
        )

        assert state.dest_age.tolist() == [8] * 5

    def test_arrivals_track_both_ages(self) -> None:
        policy = PolicyKind.threshold(8, 0.3, arrival_prob=0.5)
        state = initial_state(policy, 4, InitMode.RANDOM_DISTINCT, RandomStreams.from_seed(0))

        assert state.source_age is not None and state.since_success is not None
        assert np.array_equal(state.dest_age, state.since_success + state.source_age)

    def test_rejects_zero_age(self) -> None:
        with pytest.raises(ValidationError):
            NetworkState(dest_age=np.array([0, 2]))


class TestStep:
    """Tests for the per-slot age rule."""

    def test_success_resets_winner(self) -> None:
        state = NetworkState(dest_age=np.array([3, 1]))

        following, feedback = step(state, PolicyKind.threshold(3, 1.0), RandomStreams.from_seed(0))

        assert feedback == SlotFeedback.success(0)
        assert following.dest_age.tolist() == [1, 2]
        assert following.slot == 1

    def test_step_leaves_input_untouched(self) -> None:
        state = NetworkState(dest_age=np.array([3, 1]))

        step(state, PolicyKind.threshold(3, 1.0), RandomStreams.from_seed(0))

        assert state.dest_age.tolist() == [3, 1]
        assert state.slot == 0

    def test_collision_ages_everyone(self) -> None:
        state = NetworkState(dest_age=np.array([2, 2, 2]))

        following, feedback = step(state, PolicyKind.threshold(2, 1.0), RandomStreams.from_seed(0))

        assert feedback.kind is FeedbackKind.COLLISION
        assert feedback.attempts == 3
        assert following.dest_age.tolist() == [3, 3, 3]

    def test_idle_below_threshold(self) -> None:
        state = NetworkState(dest_age=np.array([1, 2]))

        following, feedback = step(state, PolicyKind.threshold(5, 1.0), RandomStreams.from_seed(0))

        assert feedback == SlotFeedback.idle()
        assert following.dest_age.tolist() == [2, 3]

    def test_below_threshold_ages_stay_distinct(self) -> None:
        policy = PolicyKind.threshold(8, 0.3)
        streams = RandomStreams.from_seed(11)
        state = initial_state(policy, 5, InitMode.RANDOM_DISTINCT, streams)

        for _ in range(500):
            state, _ = step(state, policy, streams)
            capped = np.minimum(state.dest_age, 8)
            below = capped[capped < 8]
            assert len(set(below.tolist())) == below.size

    def test_arrival_delivers_source_age(self) -> None:
        state = NetworkState(
            dest_age=np.array([7, 3]),
            since_success=np.array([4, 1]),
            source_age=np.array([3, 2]),
        )
        policy = PolicyKind.threshold(4, 1.0, arrival_prob=1.0)

        following, feedback = step(state, policy, RandomStreams.from_seed(0))

        assert feedback == SlotFeedback.success(0)
        assert following.dest_age.tolist() == [4, 4]
        assert following.since_success.tolist() == [1, 2]  # type: ignore[union-attr]
        assert following.source_age.tolist() == [1, 1]  # type: ignore[union-attr]


class TestEstimator:
    """Tests for the stabilized-thinning population estimate."""

    def test_bare_rule_floor(self) -> None:
        assert stabilized_estimator_update(1.0, SlotFeedback.idle()) == 1.0

    def test_bare_rule_collision(self) -> None:
        updated = stabilized_estimator_update(5.0, SlotFeedback.collision(2))

        assert updated == pytest.approx(5 + 1 / (math.e - 2))
        assert updated == pytest.approx(6.3922, abs=1e-4)

    def test_bare_rule_success(self) -> None:
        assert stabilized_estimator_update(5.0, SlotFeedback.success(1)) == pytest.approx(4.0)

    def test_drift(self) -> None:
        params = EstimatorParams()
        updated = stabilized_estimator_update(5.0, SlotFeedback.idle(), params)

        assert updated == pytest.approx(4.0 + math.exp(-1))

    def test_rejects_estimate_below_floor(self) -> None:
        with pytest.raises(DomainError):
            stabilized_estimator_update(0.5, SlotFeedback.idle())


class TestSimulate:
    """Tests for whole runs."""

    def test_lone_source_always_succeeds(self) -> None:
        report = simulate(PolicyKind.threshold(1, 1.0), 1, slots=100, warmup=0)

        assert report.network_avg_aoi == 1.0
        assert report.throughput == 1.0
        assert report.success_count == 100

    def test_deterministic_given_seed(self) -> None:
        policy = PolicyKind.threshold(8, 0.3)
        first = simulate(policy, 5, slots=3000, warmup=100, seed=7)
        second = simulate(policy, 5, slots=3000, warmup=100, seed=7)

        assert first == second

    def test_seed_matters(self) -> None:
        policy = PolicyKind.threshold(8, 0.3)
        first = simulate(policy, 5, slots=3000, warmup=100, seed=1)
        second = simulate(policy, 5, slots=3000, warmup=100, seed=2)

        assert first.avg_aoi_per_source != second.avg_aoi_per_source

    def test_slotted_matches_gamma_one_threshold(self) -> None:
        slotted = simulate(PolicyKind.slotted(0.2), 5, slots=3000, warmup=100, seed=4)
        threshold = simulate(PolicyKind.threshold(1, 0.2), 5, slots=3000, warmup=100, seed=4)

        assert slotted.policy == "slotted"
        assert slotted.avg_aoi_per_source == threshold.avg_aoi_per_source
        assert slotted.success_count == threshold.success_count

    def test_active_count_matches_exact_pmf(self) -> None:
        """n=2, gamma=4, tau=0.5 has P = (3/11, 6/11, 2/11)."""
        report = simulate(PolicyKind.threshold(4, 0.5), 2, slots=200_000, warmup=1000, seed=0)
        exact = np.array([3 / 11, 6 / 11, 2 / 11])

        assert 0.5 * np.abs(np.asarray(report.active_fraction_pmf) - exact).sum() <= 0.02

    def test_slotted_small_network(self) -> None:
        """Two sources at tau = 1/2: AoI 1/(tau (1-tau)) = 4 per source."""
        report = simulate(PolicyKind.slotted(0.5), 2, slots=100_000, warmup=1000, seed=0)

        assert report.network_avg_aoi == pytest.approx(4.0, rel=0.03)
        assert report.throughput == pytest.approx(0.5, abs=0.01)

    def test_stabilized_listens_every_slot(self) -> None:
        report = simulate(PolicyKind.stabilized(10), 4, slots=2000, warmup=100)

        assert report.policy == "stabilized"
        assert report.rx_events_per_slot == 4.0

    def test_threshold_receives_only_on_attempts(self) -> None:
        report = simulate(PolicyKind.threshold(8, 0.3), 4, slots=2000, warmup=100)

        assert report.rx_events_per_slot == report.tx_events_per_slot

    def test_slots_must_exceed_warmup(self) -> None:
        with pytest.raises(DomainError, match="slots > warmup"):
            simulate(PolicyKind.threshold(4, 0.5), 2, slots=100, warmup=100)

    def test_work_budget(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setattr(settings, "max_sim_work", 1000.0)

        with pytest.raises(BudgetExceededError):
            simulate(PolicyKind.threshold(4, 0.5), 2, slots=1000, warmup=0)


class TestArrivals:
    """Tests for exogenous arrivals and the source-age offset."""

    def test_saturated_arrivals_offset_is_one(self) -> None:
        policy = PolicyKind.threshold(8, 0.3, arrival_prob=1.0)
        report = simulate_arrivals(policy, 4, slots=5000, warmup=100)

        assert report.source_age_offset == pytest.approx(1.0, abs=1e-9)

    def test_offset_is_mean_source_age(self) -> None:
        policy = PolicyKind.threshold(12, 0.3, arrival_prob=0.1)
        report = simulate_arrivals(policy, 5, slots=200_000, warmup=1000)

        assert report.source_age_offset == pytest.approx(10.0, abs=1.0)
        assert report.network_avg_ta_aoi is not None
        assert report.network_avg_aoi > report.network_avg_ta_aoi

    def test_needs_arrival_prob(self) -> None:
        with pytest.raises(DomainError, match="arrival_prob"):
            simulate_arrivals(PolicyKind.threshold(8, 0.3), 4, slots=100, warmup=0)


class TestConcentrationWindow:
    """Tests for the window probability around k*."""

    def test_window(self) -> None:
        pmf = [0.0] * 101
        pmf[20] = 0.7
        pmf[50] = 0.3

        assert window_probability(pmf, 0.2, 0.01) == pytest.approx(0.7)
        assert window_probability(pmf, 0.2, 2.0) == pytest.approx(1.0)

    def test_full_window_sums_exactly(self) -> None:
        """Ten masses of 0.1 add up to exactly 1."""
        assert window_probability([0.1] * 10, 0.5, 10.0) == 1.0

    def test_counted_in_slots(self) -> None:
        """Frequencies over 3 slots give exact thirds."""
        pmf = [1 / 3, 1 / 3, 1 / 3]

        assert window_probability(pmf, 0.5, 10.0, slots=3) == 1.0
        assert window_probability(pmf, 0.0, 0.1, slots=3) == 1 / 3

    def test_monotone_in_c(self) -> None:
        pmf = np.full(101, 1 / 101)
        values = [window_probability(pmf, 0.4, c) for c in (0.1, 0.5, 1.0, 2.0)]

        assert values == sorted(values)


class TestReplications:
    """Tests for run_replications."""

    def test_results_sorted_by_key(self) -> None:
        policy = PolicyKind.threshold(6, 0.4)
        configs = [
            SimConfig(policy=policy, n=n, slots=500, warmup=50, seed=seed)
            for n, seed in [(3, 2), (2, 1), (3, 0), (2, 0)]
        ]

        results = run_replications(configs, jobs=1)

        assert [config.key[1:] for config, _ in results] == [(2, 0), (2, 1), (3, 0), (3, 2)]
        assert all(report.seed == config.seed for config, report in results)

    def test_matches_direct_run(self) -> None:
        policy = PolicyKind.threshold(6, 0.4)
        config = SimConfig(policy=policy, n=3, slots=500, warmup=50, seed=5)

        [(_, report)] = run_replications([config])

        assert report == simulate(policy, 3, slots=500, warmup=50, seed=5)
