"""Root typer app, shared options and error reporting for all commands."""

import logging
from collections.abc import Iterator
from contextlib import contextmanager
from taloha._compat import StrEnum
from typing import Annotated

import typer
from pydantic import ValidationError
from rich.console import Console

from taloha.core.errors import TalohaError
from taloha.lib.metrics import log_metrics_summary

logger = logging.getLogger(__name__)

console = Console()

app = typer.Typer(
    name="taloha",
    help="Threshold-ALOHA analysis, optimization and simulation",
    pretty_exceptions_show_locals=False,
    no_args_is_help=True,
    add_completion=False,
)


class OutputFormat(StrEnum):
    CSV = "csv"
    JSON = "json"


@app.callback()
def callback(
    ctx: typer.Context,
    verbose: Annotated[
        bool,
        typer.Option("--verbose", "-v", help="Enable verbose logging"),
    ] = False,
) -> None:
    """Threshold-ALOHA analysis, optimization and simulation."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    ctx.call_on_close(lambda: log_metrics_summary(logging.DEBUG))


def _one_line(error: Exception) -> str:
    if isinstance(error, ValidationError):
        return "; ".join(
            f"{'.'.join(str(p) for p in e['loc']) or 'value'}: {e['msg']}"
            for e in error.errors()
        )
    return str(error)


@contextmanager
def reported_errors() -> Iterator[None]:
    """Turn domain and validation failures into a stderr line and exit code 1."""
    try:
        yield
    except (typer.Exit, typer.BadParameter):
        raise
    except (TalohaError, ValidationError) as e:
        typer.echo(f"Error: {_one_line(e)}", err=True)
        raise typer.Exit(code=1) from e
    except Exception as e:
        logger.exception("Unexpected error")
        typer.echo(f"Unexpected error: {e}", err=True)
        raise typer.Exit(code=1) from e


# =============================================================================
# ARGUMENT PARSING
# =============================================================================


def parse_count(value: float, name: str) -> int:
    """Integer from a float flag, so counts accept notation like 1e7."""
    if value < 0 or value != int(value):
        raise typer.BadParameter(f"{name} must be a non-negative integer, got {value}")
    return int(value)


def _whole(token: str) -> int:
    value = float(token)
    if not value.is_integer():
        raise ValueError(token)
    return int(value)


def parse_int_list(text: str, name: str) -> list[int]:
    """Parse `start:stop:step` (stop inclusive), `a,b,c` or a single integer."""
    try:
        if ":" in text:
            parts = [_whole(p) for p in text.split(":")]
            if len(parts) == 2:
                parts.append(1)
            start, stop, stride = parts
            if stride <= 0 or stop < start:
                raise ValueError
            return list(range(start, stop + 1, stride))
        return [_whole(p) for p in text.split(",") if p.strip()]
    except ValueError as e:
        raise typer.BadParameter(
            f"{name} must be start:stop:step, a comma list or an integer, got {text!r}"
        ) from e
