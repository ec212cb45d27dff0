"""Matched simulations across a gamma sequence and congestion-limit fits.

All runs share one grid, one time horizon and one initial-data recipe,
so final fields subtract cell-wise.  Rows are a deterministic function of
the configuration no matter how many workers execute the runs.
"""
from __future__ import annotations

import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import linregress

from .diagnostics import InitialDataSummary
from .errors import ConfigError, SaturationError, VacuumError
from .grid import Grid, norm
from .initial_data import InitRecipe, build_profiles, make_initial_data, validate_profiles
from .model import ModelParams, velocities
from .solver import SchemeConfig, Trajectory, run_simulation


@dataclass(frozen=True)
class SweepConfig:
    gammas: tuple[float, ...]
    recipe: InitRecipe
    n_cells: int
    t_end: float
    scheme: SchemeConfig
    parallel_runs: int = 1

    def __post_init__(self) -> None:
        if len(self.gammas) == 0:
            raise ConfigError("sweep needs at least one gamma")
        if any(b <= a for a, b in zip(self.gammas, self.gammas[1:])):
            raise ConfigError("gammas must be strictly increasing")
        if any(gamma <= 0 for gamma in self.gammas):
            raise ConfigError("gammas must be positive")
        if self.parallel_runs < 1:
            raise ConfigError("parallel_runs must be at least 1")


@dataclass(frozen=True)
class GammaRow:
    """Aggregates of one gamma run; ``failed`` rows carry the reason."""

    gamma: float
    max_rho: float = float("nan")
    min_rho: float = float("nan")
    switching_residual_max: float = float("nan")
    pi_l1_max: float = float("nan")
    dpi_l2_max: float = float("nan")
    I_plain_abs: float = float("nan")
    W_max_drift: float = float("nan")
    runtime: float = float("nan")
    failed: bool = False
    failure: str = ""


@dataclass(frozen=True)
class CrossRow:
    """Cauchy difference between consecutive gamma runs at t_end."""

    gamma_lo: float
    gamma_hi: float
    rho_l1: float
    w_linf: float


@dataclass(frozen=True)
class CongestionFit:
    """Least-squares fit of (max_rho - 1) against ln(gamma)/gamma."""

    verdict: str          # "fit", "congestion never exceeded", "insufficient data"
    slope: float = float("nan")
    r2: float = float("nan")
    n_points: int = 0


@dataclass(frozen=True)
class SweepReport:
    rows: tuple[GammaRow, ...]
    cross: tuple[CrossRow, ...]
    fit: CongestionFit


def validate_recipe(recipe: InitRecipe, gammas, g: Grid) -> InitialDataSummary:
    """Check the recipe against the tightest (largest-gamma) hypotheses.

    Returns the initial-data summary evaluated at the largest gamma.
    """
    rho0, w0 = build_profiles(recipe, g)
    validate_profiles(rho0, w0, gammas, g)
    params = ModelParams(gamma=max(gammas))
    _, summary = make_initial_data(recipe, g, params, "w_form", gammas=gammas)
    return summary


def _row_from_trajectory(gamma: float, traj: Trajectory, runtime: float) -> GammaRow:
    w_max = traj.series("W_max")
    return GammaRow(
        gamma=gamma,
        max_rho=float(np.max(traj.series("rho_max"))),
        min_rho=float(np.min(traj.series("rho_min"))),
        switching_residual_max=float(np.max(traj.series("switching_residual"))),
        pi_l1_max=float(np.max(traj.series("pi_l1"))),
        dpi_l2_max=float(np.max(traj.series("dpi_l2"))),
        I_plain_abs=abs(traj.accums.diss_plain),
        W_max_drift=float(np.max(w_max - w_max[0])),
        runtime=runtime,
    )


def _run_one(gamma: float, config: SweepConfig, g: Grid):
    params = ModelParams(gamma=gamma)
    started = _time.perf_counter()
    try:
        init, _ = make_initial_data(config.recipe, g, params,
                                    config.scheme.formulation,
                                    gammas=config.gammas)
        traj = run_simulation(init, g, params, config.scheme, config.t_end)
    except (VacuumError, SaturationError) as exc:
        return GammaRow(gamma=gamma, failed=True, failure=str(exc),
                        runtime=_time.perf_counter() - started), None
    runtime = _time.perf_counter() - started
    return _row_from_trajectory(gamma, traj, runtime), traj


def run_sweep(config: SweepConfig) -> SweepReport:
    """Execute one run per gamma and assemble the report in gamma order.

    Failed runs (vacuum or saturation) are reported as failed rows; the
    remaining rows are still emitted.
    """
    g = Grid(config.n_cells)
    validate_recipe(config.recipe, config.gammas, g)

    if config.parallel_runs > 1:
        with ThreadPoolExecutor(max_workers=config.parallel_runs) as pool:
            results = list(pool.map(lambda gm: _run_one(gm, config, g),
                                    config.gammas))
    else:
        results = [_run_one(gamma, config, g) for gamma in config.gammas]

    rows = tuple(row for row, _ in results)
    finals = {row.gamma: traj for (row, traj) in results if traj is not None}

    cross = []
    for lo, hi in zip(config.gammas, config.gammas[1:]):
        if lo not in finals or hi not in finals:
            continue
        ta, tb = finals[lo], finals[hi]
        drho = ta.final_state.rho - tb.final_state.rho
        _, wa = velocities(ta.final_state, g, ta.params)
        _, wb = velocities(tb.final_state, g, tb.params)
        cross.append(CrossRow(lo, hi, norm(drho, g, "l1"), norm(wa - wb, g, "linf")))

    return SweepReport(rows=rows, cross=tuple(cross), fit=fit_congestion_rate(rows))


def fit_congestion_rate(rows) -> CongestionFit:
    """Fit the density excess over 1 against ln(gamma)/gamma.

    Needs at least 3 rows with max_rho > 1; reports a degenerate verdict
    when congestion is never exceeded, and an insufficient-data verdict
    when fewer than 3 usable rows exist.
    """
    usable = [(r.gamma, r.max_rho - 1.0) for r in rows
              if not r.failed and np.isfinite(r.max_rho) and r.max_rho > 1.0]
    if not usable:
        return CongestionFit(verdict="congestion never exceeded")
    if len(usable) < 3:
        return CongestionFit(verdict="insufficient data", n_points=len(usable))
    x = np.array([np.log(gm) / gm for gm, _ in usable])
    y = np.array([excess for _, excess in usable])
    fit = linregress(x, y)
    return CongestionFit(verdict="fit", slope=float(fit.slope),
                         r2=float(fit.rvalue ** 2), n_points=len(usable))
