"""Configuration management using pydantic-settings.

Key patterns:
1. Multiple env files (.env, .env.local) - local overrides shared
2. validation_alias for explicit env var names
3. Singleton instance for easy import

Usage:
    from taloha.core.config import settings
    print(settings.output_dir)
"""

import logging
import os
from pathlib import Path
from taloha._compat import Self

from pydantic import Field, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Settings loaded from TALOHA_* environment variables."""

    model_config = SettingsConfigDict(
        env_file=(".env", ".env.local"),
        extra="ignore",
    )

    @model_validator(mode="after")
    def warn_unwritable_output_dir(self) -> Self:
        """Warn at startup if the output directory cannot be written."""
        path = Path(self.output_dir)
        if path.exists() and not os.access(path, os.W_OK):
            logger.warning("Output directory is not writable: %s", path)
        return self

    # ==========================================================================
    # PATHS
    # ==========================================================================

    output_dir: str = Field(
        default="./results",
        validation_alias="TALOHA_OUTPUT_DIR",
        description="Default directory for CSV and JSON outputs",
    )

    # ==========================================================================
    # RESOURCE GUARDS
    # ==========================================================================

    max_sim_work: float = Field(
        default=5e10,
        gt=0,
        validation_alias="TALOHA_MAX_SIM_WORK",
        description="Upper bound on n * (warmup + slots) for one simulation run",
    )

    oracle_max_states: int = Field(
        default=100_000,
        gt=0,
        validation_alias="TALOHA_ORACLE_MAX_STATES",
        description="Upper bound on recurrent states enumerated by the oracle",
    )

    # ==========================================================================
    # SIMULATION DEFAULTS
    # ==========================================================================

    warmup_floor: int = Field(
        default=100_000,
        ge=0,
        validation_alias="TALOHA_WARMUP_FLOOR",
        description="Default warmup is max(10 * gamma, warmup_floor) slots",
    )

    jobs: int = Field(
        default=1,
        ge=1,
        validation_alias="TALOHA_JOBS",
        description="Default number of worker processes for sweeps",
    )

    # ==========================================================================
    # NUMERICS
    # ==========================================================================

    power_iteration_tol: float = Field(
        default=1e-13,
        gt=0,
        validation_alias="TALOHA_POWER_ITERATION_TOL",
        description="L1 convergence threshold of the oracle's power iteration",
    )

    power_iteration_max_iter: int = Field(
        default=1_000_000,
        gt=0,
        validation_alias="TALOHA_POWER_ITERATION_MAX_ITER",
        description="Iteration cap of the oracle's power iteration",
    )


# Singleton instance
settings = Settings.model_validate({})
