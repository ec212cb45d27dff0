"""Per-snapshot diagnostics and end-of-run verdicts.

Every monitored functional falls into one of three tolerance classes,
declared once in ``TOL`` so tests cite a single source:

  * exact class      -- identities the scheme preserves to rounding,
  * reconstruction   -- continuum identities evaluated on reconstructed
                        fields, satisfied up to scheme error,
  * refinement class -- residuals that must decay under grid refinement
                        at a minimum observed order.
"""
from __future__ import annotations

from dataclasses import dataclass, fields as dc_fields

import numpy as np

from .grid import Field, Grid, as_field, ddx_central, integrate, norm
from .model import (
    ModelParams,
    State,
    compute_W,
    enthalpy_H,
    potential_pi,
    velocities,
)


@dataclass(frozen=True)
class Tolerances:
    """Single source of truth for diagnostic tolerances."""

    exact: float = 1e-12                 # conservation identities, relative
    exact_abs: float = 1e-13             # quadrature identities, absolute
    ke_w_rel: float = 1e-8               # slack for non-increasing rho*w^2
    energy_frac: float = 0.05            # lower band of the energy residual, x E1
    energy_abs: float = 1e-8             # upper band of the energy residual
    reconstruction: float = 5e-2         # W-max / rho*W^2 drift, reconstructed
    w_transport: float = 1e-10           # W-max drift when W is evolved directly
    w_transport_step: float = 1e-14      # per-step slack of the monotone update
    lower_bound_frac: float = 1e-2       # x rho0_min, margin slack
    lower_bound_abs: float = 8e-3        # absolute margin slack, standard case
    psi_periodic: float = 1e-12
    psi_gradient_dx: float = 5.0         # x dx bound on |ddx(Psi) - (rho - <rho>)|
    min_order: float = 0.9               # refinement class minimum observed order


TOL = Tolerances()


@dataclass
class Accumulators:
    """Running time integrals, updated once per solver step.

    ``int_mass_flux[i]`` is the rectangle sum over time of the scheme's
    total mass flux through face i+1/2 (the discrete counterpart of rho*u
    there); its face differences telescope exactly against the density
    update, which is what :func:`psi_test_function` relies on.
    """

    diss_visc: float = 0.0        # int int lambda (dx u)^2
    diss_offset: float = 0.0      # int int rho (dx p)^2
    work_offset: float = 0.0      # int int (dx p) rho w
    diss_weighted: float = 0.0    # int int (rho - <rho>) lambda dx u
    diss_plain: float = 0.0       # int int lambda dx u
    diss_plain_low: float = 0.0   # region rho <= s_mid
    diss_plain_high: float = 0.0  # region rho > s_mid
    int_mass_flux: np.ndarray | None = None

    def copy(self) -> "Accumulators":
        out = Accumulators(**{
            f.name: getattr(self, f.name) for f in dc_fields(self)
            if f.name != "int_mass_flux"
        })
        out.int_mass_flux = (None if self.int_mass_flux is None
                             else self.int_mass_flux.copy())
        return out


@dataclass(frozen=True)
class InitialDataSummary:
    """Scalar functionals of the initial data used by later checks."""

    M0: float           # max of (dx w0)/rho0; nonnegative by periodicity
    rho0_min: float
    rho0_max: float
    mean_rho0: float
    E0: float           # ||rho0||_L1
    E1: float           # int rho0 u0^2
    E2: float           # int rho0 w0^2 + int H(rho0)
    H0_total: float     # int H(rho0)


def summarize_initial_data(state: State, g: Grid, params: ModelParams) -> InitialDataSummary:
    rho = as_field(state.rho, g)
    if not np.all(rho > 0.0):
        raise ValueError("initial density must be strictly positive")
    u, w = velocities(state, g, params)
    W0 = compute_W(rho, w, g)
    h0 = integrate(enthalpy_H(rho, params), g)
    return InitialDataSummary(
        M0=float(np.max(W0)),
        rho0_min=float(np.min(rho)),
        rho0_max=float(np.max(rho)),
        mean_rho0=integrate(rho, g) / g.length,
        E0=norm(rho, g, "l1"),
        E1=integrate(rho * u * u, g),
        E2=integrate(rho * w * w, g) + h0,
        H0_total=h0,
    )


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Snapshot of every monitored functional at one time."""

    t: float
    mass: float
    ke_u: float
    ke_w: float
    H_total: float
    rho_min: float
    rho_max: float
    W_max: float
    W_min: float
    rhoW2: float
    pi_l1: float
    dpi_l2: float
    switching_residual: float
    lower_bound_margin: float
    energy_residual: float
    H_balance_residual: float
    rho_p_balance_residual: float


def switching_residual(rho: Field, params: ModelParams, g: Grid) -> float:
    """L2 norm of (1 - rho) * pi(rho); vanishes at full congestion.

    rho is not clamped: pre-limit densities may exceed 1 slightly and the
    excess must show up in the residual.
    """
    arr = as_field(rho, g)
    return norm((1.0 - arr) * potential_pi(arr, params), g, "l2")


def lower_bound_margin(t: float, rho_min: float, summary: InitialDataSummary) -> float:
    """rho_min(t) minus the transported-potential lower bound.

    The bound is 1/(M0 t + 1/rho0_min); the continuum value of the margin
    is nonnegative, the scheme is allowed first-order slack.
    """
    bound = 1.0 / (summary.M0 * t + 1.0 / summary.rho0_min)
    return rho_min - bound


def basic_energy_residual(ke_u: float, diss_visc: float, e1_seed: float) -> float:
    """ke_u(t) + 2 * accumulated viscous dissipation - E1.

    Zero for the continuum; nonpositive (up to rounding) for the
    dissipative scheme.
    """
    return ke_u + 2.0 * diss_visc - e1_seed


def H_balance_residual(H_total: float, accums: Accumulators,
                       summary: InitialDataSummary) -> float:
    """Discrete defect of the entropy balance.

    int H(t) - int H(0) + int int rho (dx p)^2 - int int (dx p) rho w;
    decays under refinement.
    """
    return (H_total - summary.H0_total) + accums.diss_offset - accums.work_offset


def rho_p_balance_residual(H_total: float, accums: Accumulators,
                           summary: InitialDataSummary,
                           params: ModelParams) -> float:
    """Discrete defect of the rho*p balance law.

    int rho p (t) - int rho0 p(rho0) + int int lambda dx u, using
    rho p = (gamma + 1) H; the flux term integrates to zero on the torus.
    """
    gp1 = params.gamma + 1.0
    return gp1 * (H_total - summary.H0_total) + accums.diss_plain


def record(state: State, g: Grid, params: ModelParams,
           accums: Accumulators, summary: InitialDataSummary) -> DiagnosticsRecord:
    """Evaluate every monitored functional on one state.

    Pure function of its inputs: identical state and accumulators give an
    identical record.
    """
    rho = as_field(state.rho, g)
    u, w = velocities(state, g, params)
    W = compute_W(rho, w, g)
    pi = potential_pi(rho, params)
    H_total = integrate(enthalpy_H(rho, params), g)
    ke_u = integrate(rho * u * u, g)
    rho_min = float(np.min(rho))
    return DiagnosticsRecord(
        t=state.t,
        mass=integrate(rho, g),
        ke_u=ke_u,
        ke_w=integrate(rho * w * w, g),
        H_total=H_total,
        rho_min=rho_min,
        rho_max=float(np.max(rho)),
        W_max=float(np.max(W)),
        W_min=float(np.min(W)),
        rhoW2=integrate(rho * W * W, g),
        pi_l1=norm(pi, g, "l1"),
        dpi_l2=norm(ddx_central(pi, g), g, "l2"),
        switching_residual=switching_residual(rho, params, g),
        lower_bound_margin=lower_bound_margin(state.t, rho_min, summary),
        energy_residual=basic_energy_residual(ke_u, accums.diss_visc, summary.E1),
        H_balance_residual=H_balance_residual(H_total, accums, summary),
        rho_p_balance_residual=rho_p_balance_residual(H_total, accums, summary, params),
    )


@dataclass(frozen=True)
class CheckResult:
    """Outcome of an end-of-run verdict."""

    name: str
    passed: bool
    worst: float
    tol: float

    def __bool__(self) -> bool:
        return self.passed


def W_max_principle_check(w_max_series, *, reconstructed: bool = True) -> CheckResult:
    """Verdict on max W(t) <= max W(0) + tol along a trajectory.

    ``reconstructed`` selects the slack: scheme-error tolerance for W
    rebuilt from the PDE state, near-zero tolerance when W was evolved by
    the monotone transport update.
    """
    series = np.asarray(w_max_series, dtype=float)
    rel = TOL.reconstruction if reconstructed else TOL.w_transport
    tol = rel * (1.0 + abs(series[0]))
    worst = float(np.max(series - series[0]))
    return CheckResult("W_max_principle", worst <= tol, worst, tol)


def rhoW2_conservation_check(rhoW2_series) -> CheckResult:
    """Verdict on |int rho W^2 (t) - int rho W^2 (0)| staying small."""
    series = np.asarray(rhoW2_series, dtype=float)
    tol = TOL.reconstruction * (1.0 + series[0])
    worst = float(np.max(np.abs(series - series[0])))
    return CheckResult("rhoW2_conservation", worst <= tol, worst, tol)


def psi_test_function(trajectory, g: Grid):
    """Cumulative test function Psi and its two structural identities.

    Psi(x, t) = int_0^x (rho0 - <rho>) dy - int_0^t (rho u)(x, s) ds,
    built from spatial prefix dx-sums and the per-step rectangle sums of
    rho*u carried by the trajectory.  Returns (psi_series, checks) where
    checks verify periodicity of Psi and ddx(Psi) = rho - <rho> up to
    first-order prefix error.
    """
    mean_rho = trajectory.mean_rho
    rho0 = as_field(trajectory.snapshots[0].state.rho, g)
    centred = rho0 - mean_rho
    # prefix[i] approximates the integral from 0 to the left edge of cell i
    prefix = g.dx * (np.cumsum(centred) - centred)
    wrap_defect = abs(g.dx * float(np.sum(centred)))

    psi_series = []
    grad_defect = 0.0
    for snap in trajectory.snapshots:
        # cell sample of int rho*u dt: mean of the two adjacent face sums
        time_part = 0.5 * (snap.int_mass_flux + np.roll(snap.int_mass_flux, 1))
        psi = prefix - time_part
        psi_series.append(psi)
        rho_t = as_field(snap.state.rho, g)
        grad_defect = max(
            grad_defect,
            float(np.max(np.abs(ddx_central(psi, g) - (rho_t - mean_rho)))),
        )

    checks = {
        "periodicity": CheckResult(
            "psi_periodicity", wrap_defect <= TOL.psi_periodic,
            wrap_defect, TOL.psi_periodic,
        ),
        "gradient": CheckResult(
            "psi_gradient", grad_defect <= TOL.psi_gradient_dx * g.dx,
            grad_defect, TOL.psi_gradient_dx * g.dx,
        ),
    }
    return psi_series, checks


def weighted_dissipation_report(trajectory):
    """Accumulated mean-weighted and plain viscous-flux integrals.

    Returns (I_mean, I_plain, (low, high)) where the split partitions
    I_plain across the density threshold s_mid = (1 + <rho>)/2.
    """
    a = trajectory.accums
    return a.diss_weighted, a.diss_plain, (a.diss_plain_low, a.diss_plain_high)
