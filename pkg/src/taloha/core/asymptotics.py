"""Large-network analysis of threshold-ALOHA.

With gamma = r*n and tau = alpha/n, the log-ratio log(P_m / P_{m-1}) of the
active-count distribution converges to f(k), k = m/n:

    f(k) = ln(e^{k alpha} / (k alpha) - 1) + ln(r / (k + r - 1) - 1)

f has one or three roots in (0, 1). Roots where f decreases are peaks of the
distribution; with three roots the sign of the integral of f between the
outer roots decides which peak the network concentrates on. The selected
root k* fixes the success probability of an active source, n*q0 -> alpha
e^{-k* alpha}, and through the pivot-source renewal chain the limiting AoI.
"""

import logging
import math
from collections.abc import Callable
from taloha._compat import StrEnum
from taloha._compat import Self

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import integrate, optimize

from taloha.core.errors import (
    ConvergenceError,
    DomainError,
    IndeterminateRegimeError,
    QuadratureError,
)
from taloha.core.model import ActivePmf, AsymptoticParams, Regime, RootAnalysis
from taloha.lib.metrics import tracked

logger = logging.getLogger(__name__)

ROOT_SCAN_POINTS = 10_000
ROOT_SCAN_EDGE = 1e-6
EDGE_LOG_LIMIT = -700.0
ROOT_XTOL = 1e-13
ROOT_F_TOL = 1e-9
INTEGRAL_ABS_TOL = 1e-10
INTEGRAL_SUBDIVISIONS = 10_000
INTEGRAL_SPLIT = 0.5
INDETERMINATE_TOL = 1e-9
AOI_FORM_TOL = 1e-9
LATTICE_STEP = 0.01
LATTICE_RADIUS = 15

R_BOUNDS = (1.2, 4.0)
ALPHA_BOUNDS = (1.0, 10.0)


class RegimeConstraint(StrEnum):
    """Which regimes the optimizer may return."""

    SINGLE_PEAK_ONLY = "single-peak"
    ANY = "any"

    def allows(self, regime: Regime) -> bool:
        if self is RegimeConstraint.SINGLE_PEAK_ONLY:
            return regime is Regime.SINGLE_PEAK
        return regime is not Regime.DOUBLE_PEAK_UPPER


class AoiEvaluation(BaseModel):
    """Limiting per-source AoI and throughput at the selected root."""

    model_config = ConfigDict(frozen=True)

    aoi_scaled: float = Field(description="Limit of AoI / n")
    aoi_scaled_alt: float = Field(description="Same limit via r (k^2+1) / (2(1-k))")
    g_offered: float = Field(description="Attempts per slot, G = k* alpha")
    throughput: float = Field(description="Successes per slot, G e^{-G}")
    q0_scaled: float = Field(description="Limit of n q0, alpha e^{-k* alpha}")
    k_star: float
    analysis: RootAnalysis

    @model_validator(mode="after")
    def check_throughput_ceiling(self) -> Self:
        if self.throughput > math.exp(-1) + 1e-12:
            raise ValueError(f"throughput {self.throughput} exceeds e^-1")
        return self


class TableRow(BaseModel):
    """One row of the optimized-parameter comparison."""

    label: str
    r: float
    alpha: float
    k: float
    g_offered: float
    aoi_scaled: float
    throughput: float


class OptimizationResult(BaseModel):
    """Minimizer of the limiting AoI within a regime constraint.

    `params` is the best point of the (r, alpha) lattice around the
    continuous minimizer; `continuous` keeps the unrounded minimizer.
    """

    constraint: RegimeConstraint
    params: AsymptoticParams
    evaluation: AoiEvaluation
    continuous: AsymptoticParams
    continuous_evaluation: AoiEvaluation
    lattice_step: float | None
    grid_best: AsymptoticParams
    objective_evaluations: int
    nelder_mead_converged: bool

    def as_row(self) -> TableRow:
        label = {
            Regime.SINGLE_PEAK: "threshold-aloha (single peak)",
            Regime.DOUBLE_PEAK_LOWER: "threshold-aloha (double peak)",
            Regime.DOUBLE_PEAK_UPPER: "threshold-aloha (upper peak)",
        }[self.evaluation.analysis.regime or Regime.SINGLE_PEAK]
        return TableRow(
            label=label,
            r=self.params.r,
            alpha=self.params.alpha,
            k=self.evaluation.k_star,
            g_offered=self.evaluation.g_offered,
            aoi_scaled=self.evaluation.aoi_scaled,
            throughput=self.evaluation.throughput,
        )


# =============================================================================
# f AND ITS ROOTS
# =============================================================================


def _f_values(r: float, alpha: float, k: np.ndarray) -> np.ndarray:
    """Vectorized f; ln(e^x/x - 1) is rewritten to stay finite for large x."""
    x = k * alpha
    first = x - np.log(x) + np.log1p(-x * np.exp(-x))
    second = np.log1p(-k) - np.log(k + r - 1)
    return first + second


def f_eval(p: AsymptoticParams, k: float) -> float:
    """f(k) for k in (0, 1)."""
    p.require_analyzable()
    if not 0.0 < k < 1.0:
        raise DomainError(f"k must lie in (0, 1), got {k}")
    return float(_f_values(p.r, p.alpha, np.array([k]))[0])


def f_curve(p: AsymptoticParams, points: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    """Sample f on a uniform grid strictly inside (0, 1)."""
    p.require_analyzable()
    k = np.linspace(ROOT_SCAN_EDGE, 1 - ROOT_SCAN_EDGE, points)
    return k, _f_values(p.r, p.alpha, k)


def implied_r(k: float, alpha: float) -> float:
    """The r for which k is a root of f: r = e^{k alpha} (1-k) / (k alpha)."""
    x = k * alpha
    return math.exp(x) * (1 - k) / x


def _f_scalar(r: float, alpha: float, k: float) -> float:
    return float(_f_values(r, alpha, np.array([k]))[0])


def _f_near_one(r: float, alpha: float, t: float) -> float:
    """f at k = 1 - e^t, keeping ln(1-k) = t exact when k rounds to 1."""
    k = -math.expm1(t)
    x = k * alpha
    return x - math.log(x) + math.log1p(-x * math.exp(-x)) + t - math.log(r - math.exp(t))


def _edge_roots(p: AsymptoticParams, first: float, last: float) -> list[float]:
    """Roots outside the scan grid, between 0 and its first or its last point and 1.

    f tends to +inf at 0 and -inf at 1, so a negative first value or a
    positive last value means a root in the gap. Both gaps are searched in
    log coordinates.
    """
    roots: list[float] = []
    if first < 0:
        s_hi = math.log(ROOT_SCAN_EDGE)

        def f_low(s: float) -> float:
            return _f_scalar(p.r, p.alpha, math.exp(s))

        if f_low(EDGE_LOG_LIMIT) > 0:
            s = optimize.bisect(f_low, EDGE_LOG_LIMIT, s_hi, xtol=ROOT_XTOL)
            roots.append(math.exp(s))
        else:
            logger.warning("f(r=%g, alpha=%g) has a root below e^%g", p.r, p.alpha, EDGE_LOG_LIMIT)
    if last > 0:
        t_hi = math.log(ROOT_SCAN_EDGE)
        t_lo = math.log(p.r - 1) - p.alpha - abs(math.log(p.alpha)) - 10

        def f_high(t: float) -> float:
            return _f_near_one(p.r, p.alpha, t)

        if f_high(t_hi) > 0 > f_high(t_lo):
            t = optimize.bisect(f_high, t_lo, t_hi, xtol=ROOT_XTOL)
            k = -math.expm1(t)
            if k >= 1.0:
                logger.warning(
                    "Root of f(r=%g, alpha=%g) at 1 - %.3e rounds to 1", p.r, p.alpha, math.exp(t)
                )
                k = math.nextafter(1.0, 0.0)
            roots.append(k)
        else:
            logger.warning("No bracket for the root of f(r=%g, alpha=%g) near 1", p.r, p.alpha)
    return roots


def find_roots(p: AsymptoticParams) -> RootAnalysis:
    """All roots of f in (0, 1), ascending, regime left unset.

    Sign changes are located on a uniform grid and refined by bisection;
    roots closer to 0 or 1 than the grid reaches are found in log
    coordinates. A tangential double root produces no sign change and is
    not reported unless the grid lands on it exactly.
    """
    p.require_analyzable()
    grid = np.linspace(ROOT_SCAN_EDGE, 1 - ROOT_SCAN_EDGE, ROOT_SCAN_POINTS)
    values = _f_values(p.r, p.alpha, grid)

    def f(k: float) -> float:
        return _f_scalar(p.r, p.alpha, k)

    roots: list[float] = [float(k) for k in grid[values == 0.0]]
    for i in np.flatnonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0):
        roots.append(float(optimize.bisect(f, grid[i], grid[i + 1], xtol=ROOT_XTOL)))
    roots.extend(_edge_roots(p, float(values[0]), float(values[-1])))
    roots.sort()

    for k in roots:
        if abs(f(k)) > ROOT_F_TOL and ROOT_SCAN_EDGE <= k <= 1 - ROOT_SCAN_EDGE:
            logger.warning("Root %.12f of f(r=%g, alpha=%g) has |f|=%.2e", k, p.r, p.alpha, f(k))
    return RootAnalysis(roots=tuple(roots))


def _quad(func: Callable[[float], float], lo: float, hi: float) -> float:
    result = integrate.quad(
        func,
        lo,
        hi,
        epsabs=INTEGRAL_ABS_TOL,
        epsrel=1e-12,
        limit=INTEGRAL_SUBDIVISIONS,
        full_output=1,
    )
    value, abserr = float(result[0]), float(result[1])
    if len(result) > 3 or abserr > INTEGRAL_ABS_TOL:
        raise QuadratureError(f"quadrature over [{lo}, {hi}] did not converge", abserr, best=value)
    return value


def integral_f(p: AsymptoticParams, k_lo: float, k_hi: float) -> float:
    """Integral of f from k_lo to k_hi; reversed bounds flip the sign.

    Above k = 0.5 the integral is taken over t = ln(1-k), where the
    integrand f(1 - e^t) e^t stays smooth for roots arbitrarily close to 1.
    """
    p.require_analyzable()
    if k_lo == k_hi:
        return 0.0
    if k_lo > k_hi:
        return -integral_f(p, k_hi, k_lo)
    if not 0.0 < k_lo < k_hi < 1.0:
        raise DomainError(f"integration bounds must lie in (0, 1): [{k_lo}, {k_hi}]")

    def f(k: float) -> float:
        return _f_scalar(p.r, p.alpha, k)

    def f_tail(t: float) -> float:
        return _f_near_one(p.r, p.alpha, t) * math.exp(t)

    if k_hi <= INTEGRAL_SPLIT:
        return _quad(f, k_lo, k_hi)
    split = max(k_lo, INTEGRAL_SPLIT)
    head = _quad(f, k_lo, split) if k_lo < split else 0.0
    return head + _quad(f_tail, math.log1p(-k_hi), math.log1p(-split))


def _crosses_downward(p: AsymptoticParams, k: float, h: float = 1e-7) -> bool:
    lo, hi = max(k - h, k / 2), min(k + h, (k + 1) / 2)
    values = _f_values(p.r, p.alpha, np.array([lo, hi]))
    return bool(values[0] > 0 > values[1])


@tracked("classify_regime")
def classify_regime(p: AsymptoticParams) -> RootAnalysis:
    """Find the roots of f and select the root the network concentrates on.

    One root: single peak. Three roots k0 < k1 < k2: the lower peak k0 when
    the integral of f over [k0, k2] is negative, the upper peak k2 when it
    is positive. Two roots only arise from a tangency; the root where f
    crosses zero downward survives as a single peak.
    """
    roots = find_roots(p).roots
    if len(roots) == 3:
        value = integral_f(p, roots[0], roots[2])
        if abs(value) < INDETERMINATE_TOL:
            raise IndeterminateRegimeError(
                f"integral of f over [k0, k2] is {value:.3e}; regime indeterminate "
                f"at r={p.r}, alpha={p.alpha}",
                value,
            )
        if value < 0:
            return RootAnalysis(
                roots=roots, regime=Regime.DOUBLE_PEAK_LOWER, k_star=roots[0], integral_value=value
            )
        return RootAnalysis(
            roots=roots, regime=Regime.DOUBLE_PEAK_UPPER, k_star=roots[2], integral_value=value
        )

    if len(roots) == 2:
        crossing = [k for k in roots if _crosses_downward(p, k)]
        k_star = crossing[0] if crossing else roots[0]
        logger.info(
            "Tangential root of f at r=%g, alpha=%g; classified single peak at k=%.6f",
            p.r,
            p.alpha,
            k_star,
        )
        return RootAnalysis(roots=roots, regime=Regime.SINGLE_PEAK, k_star=k_star)

    return RootAnalysis(roots=roots, regime=Regime.SINGLE_PEAK, k_star=roots[0])


# =============================================================================
# AGE OF INFORMATION
# =============================================================================


def _aoi_from_root(r: float, alpha: float, k: float) -> tuple[float, float]:
    """Limiting AoI/n at root k in its two equivalent forms."""
    wait = math.exp(k * alpha) / alpha
    main = r**2 / (2 * (r + wait)) + wait
    alt = r * (k**2 + 1) / (2 * (1 - k))
    return main, alt


def limiting_aoi(p: AsymptoticParams) -> AoiEvaluation:
    """Limiting AoI/n, offered load and throughput at the selected root."""
    analysis = classify_regime(p)
    assert analysis.k_star is not None
    k = analysis.k_star
    aoi, alt = _aoi_from_root(p.r, p.alpha, k)
    if abs(aoi - alt) > AOI_FORM_TOL * max(1.0, aoi):
        logger.warning("AoI forms disagree at k=%.9f: %.12f vs %.12f", k, aoi, alt)
    g = k * p.alpha
    return AoiEvaluation(
        aoi_scaled=aoi,
        aoi_scaled_alt=alt,
        g_offered=g,
        throughput=g * math.exp(-g),
        q0_scaled=p.alpha * math.exp(-g),
        k_star=k,
        analysis=analysis,
    )


def pivot_chain_aoi(gamma: float, q0: float) -> float:
    """Time-average AoI of a source that waits gamma slots, then succeeds w.p. q0."""
    if gamma < 1:
        raise DomainError(f"gamma must be >= 1, got {gamma}")
    if not 0.0 < q0 <= 1.0:
        raise DomainError(f"q0 must lie in (0, 1], got {q0}")
    return gamma * (gamma - 1) / (2 * (gamma - 1 + 1 / q0)) + 1 / q0


def pivot_chain_distribution(gamma: int, q0: float, j_max: int) -> np.ndarray:
    """Stationary probabilities pi_1..pi_{j_max} of the pivot source's age."""
    if gamma < 1 or not 0.0 < q0 <= 1.0:
        raise DomainError(f"need gamma >= 1 and q0 in (0, 1], got {gamma}, {q0}")
    j = np.arange(1, j_max + 1)
    tail = (1.0 - q0) ** np.maximum(j - gamma, 0)
    return tail / (gamma - 1 + 1 / q0)


def slotted_aloha_aoi(n: int, tau: float) -> float:
    """AoI of plain slotted ALOHA with n sources, including the 1/2 offset."""
    if n < 1 or not 0.0 < tau <= 1.0:
        raise DomainError(f"need n >= 1 and tau in (0, 1], got n={n}, tau={tau}")
    return 0.5 + 1 / (tau * (1 - tau) ** (n - 1))


def slotted_aloha_limit() -> TableRow:
    """Slotted ALOHA at tau = 1/n in the large-n limit."""
    return TableRow(
        label="slotted aloha",
        r=0.0,
        alpha=1.0,
        k=1.0,
        g_offered=1.0,
        aoi_scaled=math.e,
        throughput=math.exp(-1),
    )


def throughput_curve(g_values: np.ndarray) -> np.ndarray:
    """Success probability G e^{-G} of a Poisson-like offered load G."""
    g = np.asarray(g_values, dtype=float)
    return g * np.exp(-g)


def state_set_masses(pmf: ActivePmf, roots: tuple[float, ...]) -> tuple[float, float, float]:
    """Probability of the low, middle and high active-fraction sets.

    Boundaries sit at the mid-points between consecutive roots; the low set
    is closed on its right and the high set closed on its left.
    """
    if len(roots) != 3:
        raise DomainError(f"state sets need three roots, got {len(roots)}")
    k = np.arange(pmf.n + 1) / pmf.n
    p = pmf.p
    low_cut = (roots[0] + roots[1]) / 2
    high_cut = (roots[1] + roots[2]) / 2
    low = math.fsum(p[k <= low_cut].tolist())
    high = math.fsum(p[k >= high_cut].tolist())
    middle = math.fsum(p[(k > low_cut) & (k < high_cut)].tolist())
    return low, middle, high


# =============================================================================
# OPTIMIZER
# =============================================================================

_COARSE_K = np.linspace(ROOT_SCAN_EDGE, 1 - ROOT_SCAN_EDGE, 2001)


def _coarse_objective(r: float, alpha: float, constraint: RegimeConstraint) -> float:
    """Grid-stage objective: roots by interpolation, integral by trapezoid."""
    values = _f_values(r, alpha, _COARSE_K)
    idx = np.flatnonzero(np.sign(values[:-1]) * np.sign(values[1:]) < 0)
    k0, k1, v0, v1 = _COARSE_K[idx], _COARSE_K[idx + 1], values[idx], values[idx + 1]
    roots = k0 - v0 * (k1 - k0) / (v1 - v0)
    if len(roots) == 1:
        regime, k = Regime.SINGLE_PEAK, float(roots[0])
    elif len(roots) == 3:
        inside = (_COARSE_K > roots[0]) & (_COARSE_K < roots[2])
        ks = np.concatenate(([roots[0]], _COARSE_K[inside], [roots[2]]))
        fs = np.concatenate(([0.0], values[inside], [0.0]))
        value = float(np.trapezoid(fs, ks))
        if abs(value) < INDETERMINATE_TOL:
            return math.inf
        regime = Regime.DOUBLE_PEAK_LOWER if value < 0 else Regime.DOUBLE_PEAK_UPPER
        k = float(roots[0] if value < 0 else roots[2])
    else:
        return math.inf
    if not constraint.allows(regime):
        return math.inf
    return _aoi_from_root(r, alpha, k)[0]


def _in_box(r: float, alpha: float) -> bool:
    return R_BOUNDS[0] <= r <= R_BOUNDS[1] and ALPHA_BOUNDS[0] <= alpha <= ALPHA_BOUNDS[1]


def _make_objective(constraint: RegimeConstraint) -> tuple[Callable[[np.ndarray], float], list[int]]:
    calls = [0]

    def objective(x: np.ndarray) -> float:
        calls[0] += 1
        r, alpha = float(x[0]), float(x[1])
        if not _in_box(r, alpha):
            return math.inf
        try:
            evaluation = limiting_aoi(AsymptoticParams(r=r, alpha=alpha))
        except (DomainError, ConvergenceError):
            return math.inf
        regime = evaluation.analysis.regime
        if regime is None or not constraint.allows(regime):
            return math.inf
        return evaluation.aoi_scaled

    return objective, calls


def _zoom(
    objective: Callable[[np.ndarray], float],
    center: tuple[float, float],
    half_width: tuple[float, float],
    points: int,
) -> tuple[tuple[float, float], float]:
    """Best point of a local grid; ties go to the smallest r, then alpha."""
    best, best_value = center, objective(np.array(center))
    for r in np.linspace(center[0] - half_width[0], center[0] + half_width[0], points):
        for alpha in np.linspace(center[1] - half_width[1], center[1] + half_width[1], points):
            value = objective(np.array([r, alpha]))
            if value < best_value or (
                value == best_value and (r, alpha) < best
            ):
                best, best_value = (float(r), float(alpha)), value
    return best, best_value


def _lattice(
    objective: Callable[[np.ndarray], float],
    center: tuple[float, float],
    step: float,
    radius: int,
) -> tuple[tuple[float, float], float]:
    """Best point of the step-spaced lattice within radius steps of center."""
    i0, j0 = round(center[0] / step), round(center[1] / step)
    best, best_value = center, math.inf
    for i in range(i0 - radius, i0 + radius + 1):
        for j in range(j0 - radius, j0 + radius + 1):
            point = (round(i * step, 10), round(j * step, 10))
            value = objective(np.array(point))
            if value < best_value:
                best, best_value = point, value
    return best, best_value


@tracked("optimize_parameters")
def optimize_parameters(
    regime_constraint: RegimeConstraint | None = None,
    *,
    grid_points: int = 200,
    zoom_points: int = 21,
    zoom_passes: int = 2,
    xatol: float = 1e-4,
    lattice_step: float | None = LATTICE_STEP,
    lattice_radius: int = LATTICE_RADIUS,
) -> OptimizationResult:
    """Minimize the limiting AoI/n over (r, alpha) in [1.2, 4] x [1, 10].

    A coarse grid finds the basin, local zoom grids close in on it (the
    optimum typically sits on a regime boundary), and Nelder-Mead polishes
    the result. Every stage re-classifies the regime at each point. Finally
    the lattice of spacing lattice_step around the polished point is
    searched and its best point is reported; None skips that stage.
    """
    constraint = regime_constraint or RegimeConstraint.ANY
    r_grid = np.linspace(*R_BOUNDS, grid_points)
    alpha_grid = np.linspace(*ALPHA_BOUNDS, grid_points)
    coarse = np.array(
        [[_coarse_objective(r, a, constraint) for a in alpha_grid] for r in r_grid]
    )
    if not np.isfinite(coarse).any():
        raise ConvergenceError("no admissible point on the coarse grid", math.inf)
    i, j = np.unravel_index(int(np.argmin(coarse)), coarse.shape)
    grid_best = (float(r_grid[i]), float(alpha_grid[j]))
    logger.info(
        "Coarse grid (%s): best r=%.4f alpha=%.4f aoi/n=%.5f",
        constraint,
        grid_best[0],
        grid_best[1],
        coarse[i, j],
    )

    objective, calls = _make_objective(constraint)
    best = grid_best
    step = (r_grid[1] - r_grid[0], alpha_grid[1] - alpha_grid[0])
    best_value = objective(np.array(best))
    for zoom in range(zoom_passes):
        scale = 2 / 5**zoom
        best, best_value = _zoom(objective, best, (step[0] * scale, step[1] * scale), zoom_points)
        logger.info("Zoom pass %d: r=%.5f alpha=%.5f aoi/n=%.6f", zoom + 1, *best, best_value)
    if not math.isfinite(best_value):
        raise ConvergenceError(
            "no admissible point near the coarse-grid optimum", math.inf, best=grid_best
        )

    simplex_step = (step[0] / 5**zoom_passes, step[1] / 5**zoom_passes)
    x0 = np.array(best)
    simplex = np.array([x0, x0 + [simplex_step[0], 0.0], x0 + [0.0, simplex_step[1]]])
    nm = optimize.minimize(
        objective,
        x0,
        method="Nelder-Mead",
        options={"xatol": xatol, "fatol": 1e-12, "initial_simplex": simplex, "maxiter": 4000},
    )
    if math.isfinite(nm.fun) and nm.fun < best_value:
        best, best_value = (float(nm.x[0]), float(nm.x[1])), float(nm.fun)
    logger.info(
        "Nelder-Mead (%s, %d iterations): r=%.5f alpha=%.5f aoi/n=%.6f",
        "converged" if nm.success else "stopped",
        nm.nit,
        *best,
        best_value,
    )

    continuous = AsymptoticParams(r=best[0], alpha=best[1])
    continuous_evaluation = limiting_aoi(continuous)
    params, evaluation = continuous, continuous_evaluation
    if lattice_step is not None:
        point, value = _lattice(objective, best, lattice_step, lattice_radius)
        if math.isfinite(value):
            params = AsymptoticParams(r=point[0], alpha=point[1])
            evaluation = limiting_aoi(params)
            logger.info(
                "Lattice step %g: r=%.2f alpha=%.2f aoi/n=%.6f", lattice_step, *point, value
            )
        else:
            logger.warning("No admissible lattice point near r=%.5f alpha=%.5f", *best)

    return OptimizationResult(
        constraint=constraint,
        params=params,
        evaluation=evaluation,
        continuous=continuous,
        continuous_evaluation=continuous_evaluation,
        lattice_step=lattice_step,
        grid_best=AsymptoticParams(r=grid_best[0], alpha=grid_best[1]),
        objective_evaluations=calls[0] + grid_points**2,
        nelder_mead_converged=bool(nm.success),
    )
