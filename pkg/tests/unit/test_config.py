"""Tests for settings and operation metrics."""

import pytest
from pydantic import ValidationError

from taloha.core.config import Settings
from taloha.lib.metrics import get_metrics_summary, tracked


class TestSettings:
    """Tests for TALOHA_* environment variables."""

    def test_defaults(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.delenv("TALOHA_JOBS", raising=False)
        settings = Settings.model_validate({})

        assert settings.jobs >= 1
        assert settings.oracle_max_states > 0

    def test_env_alias(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv("TALOHA_MAX_SIM_WORK", "123")
        monkeypatch.setenv("TALOHA_OUTPUT_DIR", "/tmp/taloha-test")

        settings = Settings.model_validate({})

        assert settings.max_sim_work == 123
        assert settings.output_dir == "/tmp/taloha-test"

    def test_rejects_nonpositive_jobs(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv("TALOHA_JOBS", "0")

        with pytest.raises(ValidationError):
            Settings.model_validate({})


class TestTracked:
    """Tests for the @tracked decorator."""

    def test_counts_calls(self) -> None:
        @tracked("square")
        def square(x: int) -> int:
            return x * x

        assert square(3) == 9
        assert square(4) == 16

        summary = get_metrics_summary()["by_operation"]["square"]
        assert summary["call_count"] == 2
        assert summary["error_count"] == 0

    def test_counts_errors(self) -> None:
        @tracked()
        def fail() -> None:
            raise ValueError("boom")

        with pytest.raises(ValueError):
            fail()

        summary = get_metrics_summary()
        assert summary["by_operation"]["fail"]["error_count"] == 1
        assert summary["total_errors"] == 1
