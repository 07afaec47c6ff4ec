"""Operation timing metrics.

Provides a decorator that tracks call counts, durations, and errors of the
expensive analysis and simulation entry points. The CLI logs the summary at
the end of every command.

Usage:
    @tracked("active_pmf")
    def active_pmf(params: PolicyParams) -> ActivePmf:
        ...

    # At end of command
    metrics = get_metrics_summary()
"""

import logging
import time
from collections import defaultdict
from collections.abc import Callable
from functools import wraps
from typing import Any, ParamSpec, TypeVar

from pydantic import BaseModel, PrivateAttr

logger = logging.getLogger(__name__)

P = ParamSpec("P")
T = TypeVar("T")


class OperationMetrics(BaseModel):
    """Metrics for a single operation."""

    call_count: int = 0
    error_count: int = 0
    total_duration_ms: float = 0.0
    min_duration_ms: float = float("inf")
    max_duration_ms: float = 0.0

    @property
    def avg_duration_ms(self) -> float:
        """Average duration per call in milliseconds."""
        if self.call_count == 0:
            return 0.0
        return self.total_duration_ms / self.call_count

    def record_call(self, duration_ms: float, is_error: bool = False) -> None:
        """Record one call."""
        self.call_count += 1
        self.total_duration_ms += duration_ms
        self.min_duration_ms = min(self.min_duration_ms, duration_ms)
        self.max_duration_ms = max(self.max_duration_ms, duration_ms)
        if is_error:
            self.error_count += 1

    def to_dict(self) -> dict[str, Any]:
        """Convert to dictionary for serialization."""
        return {
            "call_count": self.call_count,
            "error_count": self.error_count,
            "total_duration_ms": round(self.total_duration_ms, 2),
            "avg_duration_ms": round(self.avg_duration_ms, 2),
            "min_duration_ms": (
                round(self.min_duration_ms, 2)
                if self.min_duration_ms != float("inf")
                else 0
            ),
            "max_duration_ms": round(self.max_duration_ms, 2),
        }


class MetricsCollector(BaseModel):
    """Collects metrics for all tracked operations."""

    _metrics: dict[str, OperationMetrics] = PrivateAttr(
        default_factory=lambda: defaultdict(OperationMetrics)
    )
    _started: float = PrivateAttr(default_factory=time.time)

    def record(self, name: str, duration_ms: float, is_error: bool = False) -> None:
        """Record one call of an operation."""
        self._metrics[name].record_call(duration_ms, is_error)

    def get_summary(self) -> dict[str, Any]:
        """Get a summary of all metrics."""
        total_calls = sum(m.call_count for m in self._metrics.values())
        total_errors = sum(m.error_count for m in self._metrics.values())
        return {
            "wall_seconds": round(time.time() - self._started, 2),
            "total_calls": total_calls,
            "total_errors": total_errors,
            "by_operation": {name: m.to_dict() for name, m in self._metrics.items()},
        }

    def log_summary(self, level: int = logging.INFO) -> None:
        """Log a one-line summary plus one line per operation."""
        summary = self.get_summary()
        logger.log(
            level,
            "Operation metrics: %d calls, %d errors, %.1fs wall",
            summary["total_calls"],
            summary["total_errors"],
            summary["wall_seconds"],
        )
        for name, data in summary["by_operation"].items():
            logger.log(
                level,
                "  %s: %d calls, avg %.1f ms, max %.1f ms",
                name,
                data["call_count"],
                data["avg_duration_ms"],
                data["max_duration_ms"],
            )

    def reset(self) -> None:
        """Reset all metrics."""
        self._metrics.clear()
        self._started = time.time()


# Global metrics collector
_collector = MetricsCollector()


def tracked(
    name: str | None = None,
) -> Callable[[Callable[P, T]], Callable[P, T]]:
    """Decorator to record duration and failures of an operation.

    Args:
        name: Name to record metrics under. If None, uses function name.
    """

    def decorator(func: Callable[P, T]) -> Callable[P, T]:
        op_name = name or func.__name__

        @wraps(func)
        def wrapper(*args: P.args, **kwargs: P.kwargs) -> T:
            start = time.perf_counter()
            is_error = False
            try:
                return func(*args, **kwargs)
            except Exception:
                is_error = True
                raise
            finally:
                _collector.record(op_name, (time.perf_counter() - start) * 1000, is_error)

        return wrapper

    return decorator


def log_metrics_summary(level: int = logging.INFO) -> None:
    """Log a summary of all operation metrics."""
    _collector.log_summary(level)


def get_metrics_summary() -> dict[str, Any]:
    """Get a summary of all operation metrics."""
    return _collector.get_summary()


def reset_metrics() -> None:
    """Reset all operation metrics."""
    _collector.reset()
