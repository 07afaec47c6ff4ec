"""CSV tables and JSON reports written by the CLI.

Convention: columns are defined as module-level lists and every row is
built by a build_*_row() helper, so a header never drifts from its rows.
Sweep rows are keyed by (policy, n, seed) and written in key order.
"""

import csv
import logging
import math
from collections import defaultdict
from datetime import datetime
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, Field

from taloha.core.model import SimReport
from taloha.version import SCHEMA_VERSION

logger = logging.getLogger(__name__)

SWEEP_COLUMNS = [
    "policy",
    "n",
    "aoi",
    "aoi_over_n",
    "throughput",
    "seed",
]

THROUGHPUT_COLUMNS = [
    "G",
    "throughput",
]

SUMMARY_COLUMNS = [
    "policy",
    "n",
    "seeds",
    "aoi_mean",
    "aoi_stderr",
    "aoi_over_n_mean",
    "aoi_over_n_stderr",
    "throughput_mean",
    "throughput_stderr",
]

CURVE_COLUMNS = [
    "k",
    "f",
]


def _fmt(value: float) -> str:
    return f"{value:.10g}"


# =============================================================================
# ROWS
# =============================================================================


def build_sweep_row(report: SimReport) -> dict[str, str]:
    """One (policy, n, seed) row of an AoI-versus-n sweep."""
    return {
        "policy": report.policy,
        "n": str(report.n),
        "aoi": _fmt(report.network_avg_aoi),
        "aoi_over_n": _fmt(report.network_avg_aoi / report.n),
        "throughput": _fmt(report.throughput),
        "seed": str(report.seed),
    }


def build_throughput_row(g_offered: float, throughput: float) -> dict[str, str]:
    return {"G": _fmt(g_offered), "throughput": _fmt(throughput)}


def build_curve_row(k: float, f: float) -> dict[str, str]:
    return {"k": _fmt(k), "f": _fmt(f)}


def _mean_stderr(values: list[float]) -> tuple[float, float]:
    """Sample mean and standard error; one sample has stderr 0."""
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        return float(arr.mean()), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def summarize_sweep(rows: list[dict[str, str]]) -> list[dict[str, str]]:
    """Aggregate raw sweep rows into mean and stderr over seeds per (policy, n)."""
    groups: dict[tuple[str, int], list[dict[str, str]]] = defaultdict(list)
    for row in rows:
        groups[(row["policy"], int(row["n"]))].append(row)

    summary: list[dict[str, str]] = []
    for (policy, n), group in sorted(groups.items()):
        aoi = _mean_stderr([float(r["aoi"]) for r in group])
        scaled = _mean_stderr([float(r["aoi_over_n"]) for r in group])
        throughput = _mean_stderr([float(r["throughput"]) for r in group])
        summary.append(
            {
                "policy": policy,
                "n": str(n),
                "seeds": str(len(group)),
                "aoi_mean": _fmt(aoi[0]),
                "aoi_stderr": _fmt(aoi[1]),
                "aoi_over_n_mean": _fmt(scaled[0]),
                "aoi_over_n_stderr": _fmt(scaled[1]),
                "throughput_mean": _fmt(throughput[0]),
                "throughput_stderr": _fmt(throughput[1]),
            }
        )
    return summary


def aoi_slope(rows: list[dict[str, str]]) -> float:
    """Least-squares slope of aoi against n."""
    n = np.asarray([float(r["n"]) for r in rows])
    aoi = np.asarray([float(r["aoi"]) for r in rows])
    if np.unique(n).size < 2:
        raise ValueError("slope needs at least two distinct n values")
    return float(np.polyfit(n, aoi, 1)[0])


# =============================================================================
# FILES
# =============================================================================


def write_csv(path: Path, columns: list[str], rows: list[dict[str, str]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    logger.info("Wrote %d rows to %s", len(rows), path)
    return path


def read_csv(path: Path, columns: list[str] | None = None) -> list[dict[str, str]]:
    """Read a CSV written by write_csv, checking the header when columns are given."""
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if columns is not None and reader.fieldnames != columns:
            raise ValueError(f"{path} has columns {reader.fieldnames}, expected {columns}")
        return list(reader)


class ReportEnvelope(BaseModel):
    """JSON wrapper carrying everything needed to rerun a command."""

    schema_version: str = SCHEMA_VERSION
    command: str
    created: str = Field(default_factory=lambda: datetime.now().isoformat(timespec="seconds"))
    config: dict[str, Any]
    result: Any


def write_report(path: Path, command: str, config: dict[str, Any], result: Any) -> Path:
    """Write a result (a pydantic model or plain data) inside a ReportEnvelope."""
    if isinstance(result, BaseModel):
        result = result.model_dump(mode="json")
    elif isinstance(result, list):
        result = [r.model_dump(mode="json") if isinstance(r, BaseModel) else r for r in result]
    envelope = ReportEnvelope(command=command, config=config, result=result)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(envelope.model_dump_json(indent=2), encoding="utf-8")
    logger.info("Saved %s report to %s", command, path)
    return path


def load_report(path: Path) -> ReportEnvelope:
    return ReportEnvelope.model_validate_json(path.read_text(encoding="utf-8"))
