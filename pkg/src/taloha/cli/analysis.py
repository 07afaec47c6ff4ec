"""Analytical commands: analyze, roots, optimize, oracle, curve."""

import logging
from taloha._compat import StrEnum
from pathlib import Path
from typing import Annotated

import typer
from rich.table import Table

from taloha.cli.app import app, console, reported_errors
from taloha.core.asymptotics import (
    RegimeConstraint,
    f_curve,
    limiting_aoi,
    optimize_parameters,
    slotted_aloha_limit,
)
from taloha.core.exact import (
    active_pmf,
    compare_with_oracle,
    finite_aoi_estimate,
    pmf_local_maxima,
    pmf_mean,
    pmf_mode,
    success_prob_q0,
)
from taloha.core.model import AsymptoticParams, PolicyParams, Purpose, validate_policy
from taloha.lib.paths import resolve_output
from taloha.lib.results import CURVE_COLUMNS, build_curve_row, write_csv, write_report

logger = logging.getLogger(__name__)

PMF_PRINT_LIMIT = 30


class RegimeOption(StrEnum):
    ANY = "any"
    SINGLE_PEAK = "single-peak"


OutOption = Annotated[
    Path | None,
    typer.Option("--out", "-o", help="Write a JSON report to this file or directory"),
]


@app.command()
def analyze(
    n: Annotated[int, typer.Option(help="Number of sources")],
    gamma: Annotated[int, typer.Option(help="Age threshold, slots")],
    tau: Annotated[float, typer.Option(help="Attempt probability of an active source")],
    out: OutOption = None,
) -> None:
    """Exact steady-state distribution of the number of active sources."""
    with reported_errors():
        params = validate_policy(PolicyParams(n=n, gamma=gamma, tau=tau), Purpose.EXACT_ANALYSIS)
        pmf = active_pmf(params)
        q0 = success_prob_q0(pmf, tau)
        aoi = finite_aoi_estimate(params)
        mode = pmf_mode(pmf)

        summary = Table(title=f"Active sources, n={n} gamma={gamma} tau={tau:g}")
        summary.add_column("quantity")
        summary.add_column("value", justify="right")
        summary.add_row("mode", f"{mode} ({mode / n:.4f} n)")
        summary.add_row("mean", f"{pmf_mean(pmf):.4f}")
        summary.add_row("local maxima", ", ".join(str(m) for m in pmf_local_maxima(pmf)))
        summary.add_row("q0", f"{q0:.6g}")
        summary.add_row("n q0", f"{n * q0:.4f}")
        summary.add_row("pivot-chain AoI", f"{aoi:.4f} ({aoi / n:.4f} n)")
        console.print(summary)

        if n <= PMF_PRINT_LIMIT:
            table = Table(title="P_m")
            table.add_column("m", justify="right")
            table.add_column("P_m", justify="right")
            for m, p in enumerate(pmf.p):
                table.add_row(str(m), f"{p:.4f}")
            console.print(table)

        if out is not None:
            write_report(
                resolve_output("analyze", "json", out),
                "analyze",
                {"n": n, "gamma": gamma, "tau": tau},
                {
                    "pmf": pmf.p.tolist(),
                    "mode": mode,
                    "mean": pmf_mean(pmf),
                    "q0": q0,
                    "pivot_chain_aoi": aoi,
                },
            )


@app.command()
def roots(
    r: Annotated[float, typer.Option(help="Threshold scale gamma/n")],
    alpha: Annotated[float, typer.Option(help="Attempt-rate scale n*tau")],
    out: OutOption = None,
) -> None:
    """Roots of f, the selected regime and the limiting AoI."""
    with reported_errors():
        evaluation = limiting_aoi(AsymptoticParams(r=r, alpha=alpha))
        analysis = evaluation.analysis

        table = Table(title=f"f(k) at r={r:g}, alpha={alpha:g}")
        table.add_column("quantity")
        table.add_column("value", justify="right")
        table.add_row("roots", ", ".join(f"{k:.6f}" for k in analysis.roots))
        table.add_row("regime", str(analysis.regime))
        if analysis.integral_value is not None:
            table.add_row("integral over [k0, k2]", f"{analysis.integral_value:.6e}")
        table.add_row("k*", f"{evaluation.k_star:.6f}")
        table.add_row("AoI / n", f"{evaluation.aoi_scaled:.6f}")
        table.add_row("G", f"{evaluation.g_offered:.6f}")
        table.add_row("throughput", f"{evaluation.throughput:.6f}")
        table.add_row("n q0", f"{evaluation.q0_scaled:.6f}")
        console.print(table)

        if out is not None:
            write_report(
                resolve_output("roots", "json", out), "roots", {"r": r, "alpha": alpha}, evaluation
            )


@app.command()
def optimize(
    regime: Annotated[
        RegimeOption, typer.Option(help="Regimes the optimum may lie in")
    ] = RegimeOption.ANY,
    grid_points: Annotated[int, typer.Option(help="Coarse grid points per axis")] = 200,
    out: OutOption = None,
) -> None:
    """Minimize the limiting AoI/n over (r, alpha)."""
    with reported_errors():
        result = optimize_parameters(RegimeConstraint(regime.value), grid_points=grid_points)

        table = Table(title="Optimized parameters")
        for column in ("policy", "r", "alpha", "k", "G", "AoI / n", "throughput"):
            table.add_column(column, justify="right" if column != "policy" else "left")
        for row in (result.as_row(), slotted_aloha_limit()):
            table.add_row(
                row.label,
                f"{row.r:.4f}",
                f"{row.alpha:.4f}",
                f"{row.k:.4f}",
                f"{row.g_offered:.4f}",
                f"{row.aoi_scaled:.4f}",
                f"{row.throughput:.4f}",
            )
        console.print(table)
        continuous = result.continuous_evaluation
        console.print(
            f"Continuous optimum: r={result.continuous.r:.5f} alpha={result.continuous.alpha:.5f} "
            f"k={continuous.k_star:.5f} AoI/n={continuous.aoi_scaled:.6f}"
        )
        console.print(
            f"{result.objective_evaluations} objective evaluations, "
            f"Nelder-Mead {'converged' if result.nelder_mead_converged else 'stopped early'}"
        )

        if out is not None:
            write_report(
                resolve_output("optimize", "json", out),
                "optimize",
                {"regime": regime.value, "grid_points": grid_points},
                result,
            )


@app.command()
def oracle(
    n: Annotated[int, typer.Option(help="Number of sources")],
    gamma: Annotated[int, typer.Option(help="Age threshold, slots")],
    tau: Annotated[float, typer.Option(help="Attempt probability of an active source")],
    out: OutOption = None,
) -> None:
    """Compare the closed-form PMF with brute-force enumeration."""
    with reported_errors():
        params = validate_policy(PolicyParams(n=n, gamma=gamma, tau=tau), Purpose.EXACT_ANALYSIS)
        comparison = compare_with_oracle(params)

        table = Table(title=f"Oracle, n={n} gamma={gamma} tau={tau:g}")
        table.add_column("quantity")
        table.add_column("value", justify="right")
        table.add_row("recurrent states", str(comparison.state_count))
        table.add_row("power iterations", str(comparison.iterations))
        table.add_row("residue", f"{comparison.residue:.3e}")
        table.add_row("max PMF discrepancy", f"{comparison.max_pmf_discrepancy:.3e}")
        table.add_row("max equal-type spread", f"{comparison.max_type_spread:.3e}")
        console.print(table)

        if out is not None:
            write_report(
                resolve_output("oracle", "json", out),
                "oracle",
                {"n": n, "gamma": gamma, "tau": tau},
                comparison,
            )


@app.command()
def curve(
    r: Annotated[float, typer.Option(help="Threshold scale gamma/n")],
    alpha: Annotated[float, typer.Option(help="Attempt-rate scale n*tau")],
    points: Annotated[int, typer.Option(help="Samples of k in (0, 1)")] = 1000,
    out: Annotated[
        Path | None,
        typer.Option("--out", "-o", help="CSV file or directory (default: output dir)"),
    ] = None,
) -> None:
    """Sample f(k) on (0, 1) and write it as CSV."""
    with reported_errors():
        k, f = f_curve(AsymptoticParams(r=r, alpha=alpha), points)
        path = write_csv(
            resolve_output("curve", "csv", out),
            CURVE_COLUMNS,
            [build_curve_row(float(a), float(b)) for a, b in zip(k, f, strict=True)],
        )
        console.print(f"Wrote {points} samples of f to {path}")
