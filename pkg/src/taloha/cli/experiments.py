"""Monte Carlo commands: simulate, sweep, summarize, concentration."""

import logging
from taloha._compat import StrEnum
from pathlib import Path
from typing import Annotated

import typer
from rich.table import Table

from taloha.cli.app import (
    OutputFormat,
    app,
    console,
    parse_count,
    parse_int_list,
    reported_errors,
)
from taloha.core.errors import DomainError
from taloha.core.model import AsymptoticParams, SimReport, round_half_up
from taloha.core.sim import (
    InitMode,
    PolicyKind,
    SimConfig,
    concentration_test,
    run_replications,
)
from taloha.lib.paths import latest_output, resolve_output
from taloha.lib.results import (
    SUMMARY_COLUMNS,
    SWEEP_COLUMNS,
    THROUGHPUT_COLUMNS,
    aoi_slope,
    build_sweep_row,
    build_throughput_row,
    read_csv,
    summarize_sweep,
    write_csv,
    write_report,
)

logger = logging.getLogger(__name__)

DEFAULT_R = 2.17
DEFAULT_ALPHA = 4.43


class PolicyOption(StrEnum):
    TA = "ta"
    SA = "sa"
    STABILIZED = "stabilized"


def build_policy(
    policy: PolicyOption,
    n: int,
    gamma: int | None,
    tau: float | None,
    r: float,
    alpha: float,
    arrival_prob: float | None,
) -> PolicyKind:
    """Policy for n sources; unset gamma and tau follow from (r, alpha)."""
    gamma = gamma if gamma is not None else max(1, round_half_up(r * n))
    match policy:
        case PolicyOption.TA:
            tau = tau if tau is not None else alpha / n
            return PolicyKind.threshold(gamma, tau, arrival_prob)
        case PolicyOption.SA:
            return PolicyKind.slotted(tau if tau is not None else 1 / n, arrival_prob)
        case PolicyOption.STABILIZED:
            if arrival_prob is not None:
                raise DomainError("the stabilized baseline runs without exogenous arrivals")
            return PolicyKind.stabilized(gamma)


def _print_report(report: SimReport) -> None:
    table = Table(title=f"{report.policy}, n={report.n}, seed={report.seed}")
    table.add_column("quantity")
    table.add_column("value", justify="right")
    table.add_row("slots (warmup)", f"{report.slots_simulated} ({report.warmup_slots})")
    table.add_row("AoI", f"{report.network_avg_aoi:.4f}")
    table.add_row("AoI / n", f"{report.network_avg_aoi / report.n:.4f}")
    table.add_row("throughput", f"{report.throughput:.4f}")
    table.add_row("active fraction", f"{report.active_fraction_mean:.4f}")
    table.add_row("Tx events / slot", f"{report.tx_events_per_slot:.4f}")
    table.add_row("Rx events / slot", f"{report.rx_events_per_slot:.4f}")
    if report.network_avg_ta_aoi is not None and report.source_age_offset is not None:
        table.add_row("time since success", f"{report.network_avg_ta_aoi:.4f}")
        table.add_row("source age offset", f"{report.source_age_offset:.4f}")
    console.print(table)


GammaOption = Annotated[
    int | None, typer.Option(help="Age threshold (default: round(r n))")
]
TauOption = Annotated[
    float | None, typer.Option(help="Attempt probability (default: alpha/n, or 1/n for sa)")
]
ROption = Annotated[float, typer.Option(help="Threshold scale used when gamma is unset")]
AlphaOption = Annotated[float, typer.Option(help="Attempt-rate scale used when tau is unset")]
SlotsOption = Annotated[float, typer.Option(help="Measured slots, e.g. 1e7")]
WarmupOption = Annotated[
    float | None, typer.Option(help="Warmup slots (default: max(10 gamma, TALOHA_WARMUP_FLOOR))")
]


@app.command()
def simulate(
    n: Annotated[int, typer.Option(help="Number of sources")],
    policy: Annotated[PolicyOption, typer.Option(help="Access policy")] = PolicyOption.TA,
    gamma: GammaOption = None,
    tau: TauOption = None,
    r: ROption = DEFAULT_R,
    alpha: AlphaOption = DEFAULT_ALPHA,
    arrival_prob: Annotated[
        float | None, typer.Option(help="Per-source arrival probability per slot")
    ] = None,
    slots: SlotsOption = 1e6,
    warmup: WarmupOption = None,
    seed: Annotated[int, typer.Option(help="Master seed")] = 0,
    init: Annotated[InitMode, typer.Option(help="Initial ages")] = InitMode.RANDOM_DISTINCT,
    fmt: Annotated[OutputFormat, typer.Option("--format", help="Report format")] = OutputFormat.JSON,
    out: Annotated[
        Path | None, typer.Option("--out", "-o", help="Report file or directory")
    ] = None,
) -> None:
    """Simulate one run and save its report."""
    with reported_errors():
        config = SimConfig(
            policy=build_policy(policy, n, gamma, tau, r, alpha, arrival_prob),
            n=n,
            slots=parse_count(slots, "slots"),
            warmup=None if warmup is None else parse_count(warmup, "warmup"),
            seed=seed,
            init=init,
        )
        [(_, report)] = run_replications([config], jobs=1)
        _print_report(report)

        path = resolve_output("simulate", fmt.value, out)
        if fmt is OutputFormat.CSV:
            write_csv(path, SWEEP_COLUMNS, [build_sweep_row(report)])
        else:
            write_report(path, "simulate", config.model_dump(mode="json"), report)
        console.print(f"Saved report to {path}")


@app.command()
def sweep(
    n: Annotated[str, typer.Option("--n", help="Network sizes, start:stop:step or a,b,c")],
    policy: Annotated[PolicyOption, typer.Option(help="Access policy")] = PolicyOption.TA,
    gamma: GammaOption = None,
    tau: TauOption = None,
    r: ROption = DEFAULT_R,
    alpha: AlphaOption = DEFAULT_ALPHA,
    slots: SlotsOption = 1e6,
    warmup: WarmupOption = None,
    seeds: Annotated[str, typer.Option(help="Seeds, start:stop:step or a,b,c")] = "0",
    jobs: Annotated[
        int | None, typer.Option(help="Worker processes (default: TALOHA_JOBS)")
    ] = None,
    fmt: Annotated[OutputFormat, typer.Option("--format", help="Output format")] = OutputFormat.CSV,
    out: Annotated[
        Path | None, typer.Option("--out", "-o", help="Output file or directory")
    ] = None,
) -> None:
    """Simulate every (n, seed) pair; one output row per run."""
    with reported_errors():
        sizes = parse_int_list(n, "--n")
        seed_list = parse_int_list(seeds, "--seeds")
        measured = parse_count(slots, "slots")
        warm = None if warmup is None else parse_count(warmup, "warmup")
        configs = [
            SimConfig(
                policy=build_policy(policy, size, gamma, tau, r, alpha, None),
                n=size,
                slots=measured,
                warmup=warm,
                seed=seed,
            )
            for size in sizes
            for seed in seed_list
        ]
        results = run_replications(configs, jobs)
        reports = [report for _, report in results]
        rows = [build_sweep_row(report) for report in reports]

        if fmt is OutputFormat.JSON:
            path = write_report(
                resolve_output("sweep", "json", out),
                "sweep",
                {"policy": policy.value, "n": n, "seeds": seeds, "slots": measured, "warmup": warm,
                 "gamma": gamma, "tau": tau, "r": r, "alpha": alpha},
                reports,
            )
            console.print(f"Saved {len(reports)} reports to {path}")
        else:
            path = write_csv(resolve_output("sweep", "csv", out), SWEEP_COLUMNS, rows)
            g_path = write_csv(
                resolve_output("sweep", "csv", out, suffix="_throughput"),
                THROUGHPUT_COLUMNS,
                [build_throughput_row(rep.tx_events_per_slot, rep.throughput) for rep in reports],
            )
            console.print(f"Saved {len(rows)} rows to {path} and {g_path}")

        if len(set(sizes)) >= 2:
            console.print(f"Least-squares slope of AoI vs n: {aoi_slope(rows):.4f}")


@app.command()
def summarize(
    source: Annotated[
        Path | None,
        typer.Argument(help="Sweep CSV (default: newest sweep in the output dir)"),
    ] = None,
    out: Annotated[
        Path | None, typer.Option("--out", "-o", help="Summary CSV file or directory")
    ] = None,
) -> None:
    """Mean and standard error over seeds of a sweep CSV."""
    with reported_errors():
        source = source or latest_output("sweep", "csv")
        if source is None:
            typer.echo("Error: no sweep CSV found; pass one explicitly", err=True)
            raise typer.Exit(code=1)
        summary = summarize_sweep(read_csv(source, SWEEP_COLUMNS))

        table = Table(title=f"Summary of {source.name}")
        for column in ("policy", "n", "seeds", "AoI / n", "stderr", "throughput"):
            table.add_column(column, justify="right" if column != "policy" else "left")
        for row in summary:
            table.add_row(
                row["policy"],
                row["n"],
                row["seeds"],
                f"{float(row['aoi_over_n_mean']):.4f}",
                f"{float(row['aoi_over_n_stderr']):.4f}",
                f"{float(row['throughput_mean']):.4f}",
            )
        console.print(table)
        path = write_csv(resolve_output("summary", "csv", out), SUMMARY_COLUMNS, summary)
        console.print(f"Saved summary to {path}")


@app.command()
def concentration(
    r: Annotated[float, typer.Option(help="Threshold scale gamma/n")],
    alpha: Annotated[float, typer.Option(help="Attempt-rate scale n*tau")],
    n_list: Annotated[str, typer.Option(help="Network sizes, a,b,c or start:stop:step")],
    c: Annotated[float, typer.Option(help="Window constant, half-width c n^(-1/3)")] = 1.0,
    slots: SlotsOption = 1e6,
    warmup: WarmupOption = None,
    seed: Annotated[int, typer.Option(help="Master seed")] = 0,
    out: Annotated[
        Path | None, typer.Option("--out", "-o", help="Write a JSON report here")
    ] = None,
) -> None:
    """Mass of the active fraction within c n^(-1/3) of the selected root."""
    with reported_errors():
        points = concentration_test(
            AsymptoticParams(r=r, alpha=alpha),
            parse_int_list(n_list, "--n-list"),
            c=c,
            slots=parse_count(slots, "slots"),
            seed=seed,
            warmup=None if warmup is None else parse_count(warmup, "warmup"),
        )
        table = Table(title=f"Concentration at r={r:g}, alpha={alpha:g}, c={c:g}")
        for column in ("n", "gamma", "k*", "window", "probability"):
            table.add_column(column, justify="right")
        for point in points:
            table.add_row(
                str(point.n),
                str(point.gamma),
                f"{point.k_star:.4f}",
                f"{point.epsilon:.4f}",
                f"{point.probability:.4f}",
            )
        console.print(table)

        if out is not None:
            write_report(
                resolve_output("concentration", "json", out),
                "concentration",
                {"r": r, "alpha": alpha, "n_list": n_list, "c": c, "slots": slots,
                 "warmup": warmup, "seed": seed},
                [point.model_dump(mode="json", exclude={"report"}) for point in points],
            )
