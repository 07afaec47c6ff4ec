"""Tests for shared domain types and parameter validation."""

import math

import pytest
from pydantic import ValidationError

from taloha.core.errors import DomainError
from taloha.core.model import (
    ActivePmf,
    AsymptoticParams,
    PolicyParams,
    Purpose,
    Regime,
    RootAnalysis,
    SimReport,
    SlotFeedback,
    from_asymptotic,
    round_half_up,
    to_asymptotic,
    validate_policy,
)


class TestPolicyParams:
    """Tests for PolicyParams construction and validation."""

    def test_rejects_tau_outside_open_interval(self) -> None:
        """tau must lie strictly between 0 and 1."""
        with pytest.raises(ValidationError):
            PolicyParams(n=2, gamma=4, tau=0.0)
        with pytest.raises(ValidationError):
            PolicyParams(n=2, gamma=4, tau=1.0)

    def test_rejects_zero_sources(self) -> None:
        with pytest.raises(ValidationError):
            PolicyParams(n=0, gamma=4, tau=0.5)

    def test_simulation_accepts_small_gamma(self) -> None:
        """Simulation has no gamma >= n+1 requirement."""
        params = PolicyParams(n=5, gamma=2, tau=0.3)
        assert validate_policy(params, Purpose.SIMULATION) is params

    def test_exact_analysis_needs_gamma_above_n(self) -> None:
        """The error message names the violated constraint."""
        with pytest.raises(DomainError, match="gamma < n\\+1"):
            validate_policy(PolicyParams(n=5, gamma=5, tau=0.3), Purpose.EXACT_ANALYSIS)

    def test_exact_analysis_accepts_boundary(self) -> None:
        params = PolicyParams(n=5, gamma=6, tau=0.3)
        assert validate_policy(params, Purpose.EXACT_ANALYSIS) is params

    def test_frozen(self, small_policy: PolicyParams) -> None:
        with pytest.raises(ValidationError):
            small_policy.n = 3  # type: ignore[misc]


class TestScaling:
    """Tests for conversion between (n, gamma, tau) and (r, alpha)."""

    def test_round_half_up(self) -> None:
        assert round_half_up(2.5) == 3
        assert round_half_up(220.99) == 221
        assert round_half_up(3.49) == 3

    def test_from_asymptotic(self, double_peak: AsymptoticParams) -> None:
        """gamma = round(r n), tau = alpha / n."""
        params = from_asymptotic(double_peak, 100)

        assert params.gamma == 221
        assert params.tau == pytest.approx(0.0469)

    def test_to_asymptotic(self) -> None:
        p = to_asymptotic(PolicyParams(n=200, gamma=434, tau=0.02215))

        assert p.r == pytest.approx(2.17)
        assert p.alpha == pytest.approx(4.43)


class TestAsymptoticParams:
    """Tests for the r > 1 analysis requirement."""

    def test_construction_allows_r_below_one(self) -> None:
        assert AsymptoticParams(r=0.5, alpha=2.0).r == 0.5

    def test_require_analyzable(self) -> None:
        with pytest.raises(DomainError, match="r <= 1"):
            AsymptoticParams(r=1.0, alpha=2.0).require_analyzable()

    def test_rejects_nonpositive_alpha(self) -> None:
        with pytest.raises(ValidationError):
            AsymptoticParams(r=2.0, alpha=0.0)


class TestActivePmf:
    """Tests for the log-domain PMF container."""

    def test_point_mass(self) -> None:
        pmf = ActivePmf.point_mass(4, 2)

        assert pmf.p.tolist() == [0.0, 0.0, 1.0, 0.0, 0.0]
        assert pmf.support_min == 2

    def test_rejects_unnormalized(self) -> None:
        with pytest.raises(ValidationError, match="sum"):
            ActivePmf(n=1, log_p=(math.log(0.5), math.log(0.4)), support_min=0)

    def test_rejects_wrong_length(self) -> None:
        with pytest.raises(ValidationError):
            ActivePmf(n=2, log_p=(0.0,), support_min=0)


class TestRootAnalysis:
    """Tests for root and regime consistency checks."""

    def test_single_root(self) -> None:
        analysis = RootAnalysis(roots=(0.45,), regime=Regime.SINGLE_PEAK, k_star=0.45)
        assert analysis.k_star == 0.45

    def test_rejects_regime_root_mismatch(self) -> None:
        with pytest.raises(ValidationError, match="inconsistent"):
            RootAnalysis(roots=(0.45,), regime=Regime.DOUBLE_PEAK_LOWER, k_star=0.45)

    def test_rejects_unsorted_roots(self) -> None:
        with pytest.raises(ValidationError):
            RootAnalysis(roots=(0.5, 0.2, 0.8))

    def test_k_star_must_be_a_root(self) -> None:
        with pytest.raises(ValidationError):
            RootAnalysis(roots=(0.2, 0.5, 0.8), regime=Regime.DOUBLE_PEAK_LOWER, k_star=0.3)


class TestSlotFeedback:
    """Tests for SlotFeedback shape checks."""

    def test_constructors(self) -> None:
        assert SlotFeedback.idle().attempts == 0
        assert SlotFeedback.success(3).source == 3
        assert SlotFeedback.collision(4).attempts == 4

    def test_collision_needs_two_attempts(self) -> None:
        with pytest.raises(ValidationError):
            SlotFeedback.collision(1)


class TestSimReport:
    """Tests for SimReport accounting."""

    def _report(self, **overrides: object) -> SimReport:
        fields: dict[str, object] = {
            "policy": "threshold",
            "n": 2,
            "avg_aoi_per_source": [3.0, 4.0],
            "network_avg_aoi": 3.5,
            "throughput": 0.25,
            "success_count": 25,
            "active_fraction_mean": 0.4,
            "active_fraction_pmf": [0.3, 0.6, 0.1],
            "tx_events_per_slot": 0.5,
            "rx_events_per_slot": 0.5,
            "slots_simulated": 100,
            "warmup_slots": 10,
            "seed": 0,
        }
        fields.update(overrides)
        return SimReport.model_validate(fields)

    def test_valid_report(self) -> None:
        report = self._report()

        assert report.source_age_offset is None

    def test_throughput_must_match_successes(self) -> None:
        with pytest.raises(ValidationError, match="success count"):
            self._report(success_count=30)

    def test_source_age_offset(self) -> None:
        report = self._report(
            arrival_prob=0.5, avg_ta_aoi_per_source=[1.0, 2.0], network_avg_ta_aoi=1.5
        )

        assert report.source_age_offset == pytest.approx(2.0)
