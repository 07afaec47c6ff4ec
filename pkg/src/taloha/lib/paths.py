"""Output locations for CLI results.

Every command writes under one output directory, `TALOHA_OUTPUT_DIR` unless
`--out` names a file explicitly.

Layout:
    <output_dir>/<command>_<YYYYMMDD_HHMMSS>.csv
    <output_dir>/<command>_<YYYYMMDD_HHMMSS>.json
"""

import logging
import re
from datetime import datetime
from pathlib import Path

from taloha.core.config import settings

logger = logging.getLogger(__name__)

_TIMESTAMP_FMT = "%Y%m%d_%H%M%S"
_TIMESTAMP_RE = re.compile(r"\d{8}_\d{6}")


def output_dir(override: Path | None = None) -> Path:
    """The directory results go to, created on demand."""
    path = Path(override) if override is not None else Path(settings.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def parse_timestamp(name: str) -> datetime:
    """Parse the last YYYYMMDD_HHMMSS occurrence from a filename or string."""
    matches = _TIMESTAMP_RE.findall(Path(name).stem)
    if not matches:
        raise ValueError(f"No YYYYMMDD_HHMMSS timestamp found in: {name}")
    return datetime.strptime(matches[-1], _TIMESTAMP_FMT)


def timestamped_path(command: str, ext: str, directory: Path | None = None) -> Path:
    """<directory>/<command>_<timestamp>.<ext>"""
    stamp = datetime.now().strftime(_TIMESTAMP_FMT)
    return output_dir(directory) / f"{command}_{stamp}.{ext}"


def resolve_output(
    command: str, ext: str, out: Path | None = None, suffix: str = ""
) -> Path:
    """Target file for a command's output.

    An explicit `out` ending in a file extension is used as is (its parent
    created); any other `out` is treated as a directory.
    """
    if out is not None and out.suffix:
        out.parent.mkdir(parents=True, exist_ok=True)
        if suffix:
            return out.with_name(f"{out.stem}{suffix}{out.suffix}")
        return out
    return timestamped_path(f"{command}{suffix}", ext, out)


def latest_output(command: str, ext: str, directory: Path | None = None) -> Path | None:
    """Most recent <command>_<timestamp>.<ext> in the output directory."""
    root = Path(directory) if directory is not None else Path(settings.output_dir)
    if not root.is_dir():
        return None
    candidates: list[tuple[datetime, Path]] = []
    pattern = re.compile(rf"{re.escape(command)}_{_TIMESTAMP_RE.pattern}")
    for path in root.glob(f"{command}_*.{ext}"):
        if not pattern.fullmatch(path.stem):
            logger.debug("Skipping %s: not a %s output", path, command)
            continue
        candidates.append((parse_timestamp(path.name), path))
    if not candidates:
        return None
    return max(candidates)[1]
