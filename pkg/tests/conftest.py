"""Shared test fixtures.

Add fixtures here that are used across multiple test files.
"""

from pathlib import Path

import pytest

from taloha.core.config import settings
from taloha.core.model import AsymptoticParams, PolicyParams
from taloha.lib.metrics import reset_metrics


@pytest.fixture
def small_policy() -> PolicyParams:
    """n=2, gamma=4, tau=0.5: P = (3/11, 6/11, 2/11) over 13 recurrent states."""
    return PolicyParams(n=2, gamma=4, tau=0.5)


@pytest.fixture
def double_peak() -> AsymptoticParams:
    """Tabulated double-peak operating point, lower peak selected."""
    return AsymptoticParams(r=2.21, alpha=4.69)


@pytest.fixture
def single_peak() -> AsymptoticParams:
    """Tabulated single-peak operating point."""
    return AsymptoticParams(r=2.17, alpha=4.43)


@pytest.fixture
def output_dir(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    """Point TALOHA_OUTPUT_DIR at a fresh temporary directory."""
    path = tmp_path / "results"
    monkeypatch.setattr(settings, "output_dir", str(path))
    return path


@pytest.fixture(autouse=True)
def clean_metrics() -> None:
    reset_metrics()
