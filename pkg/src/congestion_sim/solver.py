"""IMEX time integration of the system in both formulations.

One step is: explicit donor-cell upwind advection (monotone under the
CFL condition, with a dissipation floor at expansion faces) followed by
backward-Euler treatment of the degenerate diffusion with the
coefficient lagged at the previous density, which yields one periodic
tridiagonal solve per step.  Positivity failures are rescued by halving
dt before a vacuum error is declared.
"""
from __future__ import annotations

import time as _time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .diagnostics import (
    Accumulators,
    DiagnosticsRecord,
    InitialDataSummary,
    record,
    summarize_initial_data,
)
from .errors import CflError, LinearSolveError, SaturationError, VacuumError
from .grid import Field, Grid, as_field, ddx_central, integrate
from .model import (
    U_FORM,
    W_FORM,
    FORMULATIONS,
    ModelParams,
    State,
    lambda_visc,
    pi_prime,
    pressure,
    velocities,
)

# guards the CFL formula in a quiescent fluid
VELOCITY_FLOOR = 1e-12


@dataclass(frozen=True)
class SchemeConfig:
    """Time-stepping parameters shared by both formulations."""

    formulation: str
    cfl: float = 0.45
    dt_max: float = 1e-2
    dt_init: float = 1e-3
    newton_tol: float = 1e-10
    max_halvings: int = 20
    snapshot_every: float = 0.05

    def __post_init__(self) -> None:
        if self.formulation not in FORMULATIONS:
            raise ValueError(f"formulation must be one of {FORMULATIONS}")
        if not (0.0 < self.cfl <= 1.0):
            raise ValueError("cfl must lie in (0, 1]")
        for name in ("dt_max", "dt_init", "newton_tol", "snapshot_every"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.max_halvings < 0:
            raise ValueError("max_halvings must be nonnegative")


@dataclass(frozen=True)
class Snapshot:
    """State plus diagnostics at one snapshot time.

    ``int_mass_flux`` carries the rectangle sum over time of the total
    mass flux per face up to the snapshot, consumed by the
    cumulative-test-function diagnostic.
    """

    state: State
    rec: DiagnosticsRecord
    int_mass_flux: np.ndarray


@dataclass
class Trajectory:
    """Ordered snapshots, final state and the running time integrals."""

    grid: Grid
    params: ModelParams
    config: SchemeConfig
    init_summary: InitialDataSummary
    mean_rho: float
    snapshots: list[Snapshot]
    final_state: State
    accums: Accumulators
    n_steps: int
    wall_seconds: float

    @property
    def records(self) -> list[DiagnosticsRecord]:
        return [s.rec for s in self.snapshots]

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(s.rec, name) for s in self.snapshots])


class _PositivityFailure(Exception):
    """Internal signal: a trial step produced a nonpositive density."""

    def __init__(self, cell: int):
        super().__init__("nonpositive density")
        self.cell = cell


def compute_dt(state: State, g: Grid, params: ModelParams,
               config: SchemeConfig) -> float:
    """Advective CFL time step; the implicit diffusion imposes no limit."""
    u, w = velocities(state, g, params)
    speed = max(VELOCITY_FLOOR, float(np.max(np.abs(u))), float(np.max(np.abs(w))))
    return min(config.dt_max, config.cfl * g.dx / speed)


def solve_cyclic_tridiagonal(sub, diag, sup, corner_lo: float, corner_hi: float,
                             rhs, tol: float = 1e-10):
    """Solve the periodic tridiagonal system A x = rhs.

    A[i][i] = diag[i], A[i][i-1] = sub[i], A[i][i+1] = sup[i], with the
    wrap entries A[0][n-1] = corner_lo and A[n-1][0] = corner_hi given
    separately (sub[0] and sup[-1] are ignored).  Uses a rank-one
    correction of two non-periodic banded solves; valid for the strictly
    diagonally dominant systems produced by backward-Euler diffusion.
    Raises LinearSolveError if the factorization breaks down or the
    residual exceeds tol * (1 + max|rhs|).
    """
    diag = np.asarray(diag, dtype=float)
    sub = np.asarray(sub, dtype=float)
    sup = np.asarray(sup, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    n = diag.shape[0]
    if not (sub.shape[0] == sup.shape[0] == rhs.shape[0] == n):
        raise ValueError("sub, diag, sup and rhs must share one length")
    if n < 3:
        raise ValueError("periodic tridiagonal solve needs at least 3 unknowns")

    gamma_p = -diag[0] if diag[0] != 0.0 else 1.0
    b = diag.copy()
    b[0] -= gamma_p
    b[-1] -= corner_lo * corner_hi / gamma_p

    ab = np.zeros((3, n))
    ab[0, 1:] = sup[:-1]
    ab[1, :] = b
    ab[2, :-1] = sub[1:]

    spike = np.zeros(n)
    spike[0] = gamma_p
    spike[-1] = corner_hi

    try:
        sol = solve_banded((1, 1), ab, np.column_stack([rhs, spike]))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
        raise LinearSolveError(f"banded factorization failed: {exc}") from exc
    y, z = sol[:, 0], sol[:, 1]

    frac = corner_lo / gamma_p
    denom = 1.0 + z[0] + frac * z[-1]
    if denom == 0.0 or not np.isfinite(denom):
        raise LinearSolveError("rank-one correction denominator vanished")
    x = y - z * ((y[0] + frac * y[-1]) / denom)

    sub_eff = sub.copy()
    sub_eff[0] = corner_lo
    sup_eff = sup.copy()
    sup_eff[-1] = corner_hi
    residual = diag * x + sub_eff * np.roll(x, 1) + sup_eff * np.roll(x, -1) - rhs
    bound = tol * (1.0 + float(np.max(np.abs(rhs))))
    if not np.all(np.isfinite(x)) or float(np.max(np.abs(residual))) > bound:
        raise LinearSolveError(
            f"periodic tridiagonal residual {np.max(np.abs(residual)):.3e} "
            f"exceeds {bound:.3e}"
        )
    return x


def _face_mean(cells: Field) -> Field:
    # value at face i+1/2 as the arithmetic mean of cells i and i+1
    return 0.5 * (cells + np.roll(cells, -1))


def _advective_flux(q: Field, v_cells: Field) -> Field:
    """Donor-cell flux of q at faces i+1/2, upwinded on the face velocity.

    Written in viscosity form with coefficient a = |v_face|, which is
    algebraically the donor-cell flux; at expansion faces (diverging cell
    velocities) the coefficient is floored at the velocity spread so the
    dissipation cannot vanish at a stagnation face, which would otherwise
    pin a persistent kink there.  The face factor 0.5*(a + |v_face|)
    never exceeds max|v|, so monotonicity and positivity hold under the
    same CFL bound as plain donor cell.
    """
    q_right = np.roll(q, -1)
    v_face = 0.5 * (v_cells + np.roll(v_cells, -1))
    spread = np.roll(v_cells, -1) - v_cells
    a = np.maximum(np.abs(v_face), np.maximum(spread, 0.0))
    return 0.5 * (v_face * (q + q_right) - a * (q_right - q))


def _flux_divergence(face_flux: Field, g: Grid) -> Field:
    return (face_flux - np.roll(face_flux, 1)) / g.dx


def _implicit_diffusion_solve(mass_diag: Field, coeff_face: Field, rhs: Field,
                              g: Grid, dt: float, tol: float) -> Field:
    """One backward-Euler solve of mass_diag*x - dt*d/dx(coeff dx x) = rhs."""
    r = dt / (g.dx * g.dx)
    lam_hi = r * coeff_face                 # couples cell i to i+1
    lam_lo = np.roll(lam_hi, 1)             # couples cell i to i-1
    diag = mass_diag + lam_hi + lam_lo
    return solve_cyclic_tridiagonal(
        -lam_lo, diag, -lam_hi,
        corner_lo=-lam_lo[0], corner_hi=-lam_hi[-1],
        rhs=rhs, tol=tol,
    )


def _attempt_u_step(state: State, g: Grid, params: ModelParams,
                    config: SchemeConfig, dt: float, sources) -> State:
    rho = state.rho
    mom = state.mom
    u = mom / rho

    rho_new = rho - dt * _flux_divergence(_advective_flux(rho, u), g)
    mom_star = mom - dt * _flux_divergence(_advective_flux(mom, u), g)
    if sources is not None:
        s_rho, s_mom = sources(g.x, state.t)
        rho_new = rho_new + dt * s_rho
        mom_star = mom_star + dt * s_mom
    if np.min(rho_new) <= 0.0:
        raise _PositivityFailure(int(np.argmin(rho_new)))

    lam_face = _face_mean(lambda_visc(rho, params))
    u_new = _implicit_diffusion_solve(rho_new, lam_face, mom_star, g, dt,
                                      config.newton_tol)
    return State(state.t + dt, rho_new, rho_new * u_new, U_FORM)


def _attempt_w_step(state: State, g: Grid, params: ModelParams,
                    config: SchemeConfig, dt: float, sources) -> State:
    rho = state.rho
    mom = state.mom
    w = mom / rho

    rho_star = rho - dt * _flux_divergence(_advective_flux(rho, w), g)
    mom_star = mom - dt * _flux_divergence(_advective_flux(mom, w), g)
    if sources is not None:
        s_rho, s_mom = sources(g.x, state.t)
        rho_star = rho_star + dt * s_rho
        mom_star = mom_star + dt * s_mom

    diff_face = _face_mean(pi_prime(rho, params))
    rho_new = _implicit_diffusion_solve(np.ones_like(rho), diff_face, rho_star,
                                        g, dt, config.newton_tol)
    if np.min(rho_new) <= 0.0:
        raise _PositivityFailure(int(np.argmin(rho_new)))

    # cross flux w * dx(pi) at faces, with the same discrete diffusive flux
    # that the implicit mass solve just applied
    dpi_face = diff_face * (np.roll(rho_new, -1) - rho_new) / g.dx
    mom_new = mom_star + dt * _flux_divergence(_face_mean(w) * dpi_face, g)
    return State(state.t + dt, rho_new, mom_new, W_FORM)


def _step_with_rescue(attempt, state: State, g: Grid, params: ModelParams,
                      config: SchemeConfig, dt: float, sources) -> State:
    dt_try = dt
    for _ in range(config.max_halvings + 1):
        try:
            return attempt(state, g, params, config, dt_try, sources)
        except _PositivityFailure as fail:
            last_cell = fail.cell
            dt_try *= 0.5
    raise VacuumError(
        f"density reached zero at t={state.t:.6g}, cell {last_cell}; "
        f"{config.max_halvings} dt halvings exhausted",
        t=state.t, cell=last_cell, gamma=params.gamma,
    )


def step_u_form(state: State, g: Grid, params: ModelParams,
                config: SchemeConfig, dt: float, sources=None) -> State:
    """One IMEX step of the velocity formulation.

    Explicit donor-cell advection of rho and rho*u on the face-averaged
    velocity, then backward-Euler diffusion with the viscosity lagged at
    the old density, solved as one periodic tridiagonal system in the new
    velocity.  Mass is conserved exactly by the conservative fluxes.
    """
    if state.formulation != U_FORM:
        raise ValueError("step_u_form requires a u-formulation state")
    return _step_with_rescue(_attempt_u_step, state, g, params, config, dt, sources)


def step_w_form(state: State, g: Grid, params: ModelParams,
                config: SchemeConfig, dt: float, sources=None) -> State:
    """One IMEX step of the desired-velocity formulation.

    The advective fluxes rho*w and rho*w^2 are upwinded on w; the
    diffusive flux dx(pi) is backward-Euler implicit in rho with the face
    coefficient pi'(rho) lagged at the old density; the momentum cross
    flux reuses the exact discrete diffusive flux of the mass solve so a
    uniform desired velocity is preserved identically.
    """
    if state.formulation != W_FORM:
        raise ValueError("step_w_form requires a w-formulation state")
    return _step_with_rescue(_attempt_w_step, state, g, params, config, dt, sources)


def step_W_transport(W: Field, u: Field, g: Grid, dt: float) -> Field:
    """Monotone upwind update of the pure transport equation for W.

    Each output value is a convex combination of old neighbouring values,
    so the discrete max cannot grow and the min cannot shrink.  Requires
    dt * max|u| <= dx.
    """
    W = as_field(W, g)
    u = as_field(u, g)
    courant = dt * float(np.max(np.abs(u))) / g.dx
    if courant > 1.0 + 1e-14:
        raise CflError(f"transport step violates CFL: dt*max|u|/dx = {courant:.4g}")
    u_pos = np.maximum(u, 0.0)
    u_neg = np.minimum(u, 0.0)
    return W - (dt / g.dx) * (u_pos * (W - np.roll(W, 1))
                              + u_neg * (np.roll(W, -1) - W))


def _total_mass_face_flux(old: State, new: State, g: Grid,
                          params: ModelParams) -> Field:
    """Reproduce the step's total mass flux through each face i+1/2.

    For the u-formulation this is the upwind flux of rho on u; the
    w-formulation adds the implicit diffusive flux, evaluated exactly as
    the solve applied it (lagged coefficient, new density gradient).
    Either way it discretizes rho*u at the face.
    """
    if old.formulation == U_FORM:
        return _advective_flux(old.rho, old.mom / old.rho)
    flux = _advective_flux(old.rho, old.mom / old.rho)
    diff_face = _face_mean(pi_prime(old.rho, params))
    return flux - diff_face * (np.roll(new.rho, -1) - new.rho) / g.dx


def _accumulate(accums: Accumulators, old: State, new: State, g: Grid,
                params: ModelParams, mean_rho: float, dt: float) -> None:
    """Advance all running time integrals over one step.

    Rectangle rule in time with the integrand at the step start, except
    the viscous dissipation, whose velocity gradient is taken at the
    backward-Euler level (face differences of the new velocity against
    the lagged viscosity) so it accounts exactly for what the implicit
    solve removed; this keeps the discrete energy balance one-sided.
    """
    rho_old = old.rho
    u_old, w_old = velocities(old, g, params)
    u_new, _ = velocities(new, g, params)

    lam_face = _face_mean(lambda_visc(rho_old, params))
    du_face = (np.roll(u_new, -1) - u_new) / g.dx
    accums.diss_visc += dt * g.dx * float(np.sum(lam_face * du_face * du_face))

    dxp = ddx_central(pressure(rho_old, params), g)
    accums.diss_offset += dt * integrate(rho_old * dxp * dxp, g)
    accums.work_offset += dt * integrate(dxp * rho_old * w_old, g)

    lam_dxu = lambda_visc(rho_old, params) * ddx_central(u_old, g)
    accums.diss_plain += dt * integrate(lam_dxu, g)
    accums.diss_weighted += dt * integrate((rho_old - mean_rho) * lam_dxu, g)
    s_mid = 0.5 * (1.0 + mean_rho)
    low = rho_old <= s_mid
    accums.diss_plain_low += dt * integrate(np.where(low, lam_dxu, 0.0), g)
    accums.diss_plain_high += dt * integrate(np.where(low, 0.0, lam_dxu), g)

    accums.int_mass_flux += dt * _total_mass_face_flux(old, new, g, params)


def run_simulation(init: State, g: Grid, params: ModelParams,
                   config: SchemeConfig, t_end: float,
                   hooks=None, sources=None) -> Trajectory:
    """Advance the state to t_end, recording diagnostics along the way.

    The final step is clipped to land exactly on t_end so runs at
    different resolutions are comparable at identical times.  The whole
    loop is deterministic: identical inputs give bit-identical output.
    """
    if t_end < init.t:
        raise ValueError("t_end must not precede the initial time")
    rho0 = as_field(init.rho, g)
    if not np.all(rho0 > 0.0):
        raise ValueError("initial density must be strictly positive")

    started = _time.perf_counter()
    try:
        summary = summarize_initial_data(init, g, params)
    except SaturationError as err:
        if err.t is None:
            err.t = init.t
        raise
    mean_rho = integrate(rho0, g) / g.length
    accums = Accumulators(int_mass_flux=np.zeros(g.n_cells))
    step = step_u_form if config.formulation == U_FORM else step_w_form

    def take_snapshot(state: State) -> None:
        rec = record(state, g, params, accums, summary)
        snapshots.append(Snapshot(state, rec, accums.int_mass_flux.copy()))
        if hooks:
            for hook in hooks:
                hook(state, rec)

    snapshots: list[Snapshot] = []
    state = init
    take_snapshot(state)

    n_steps = 0
    next_snap = init.t + config.snapshot_every
    while state.t < t_end:
        try:
            dt = compute_dt(state, g, params, config)
            if n_steps == 0:
                dt = min(dt, config.dt_init)
            final_step = state.t + dt >= t_end
            if final_step:
                dt = t_end - state.t
            new_state = step(state, g, params, config, dt, sources)
        except SaturationError as err:
            if err.t is None:
                err.t = state.t
            raise
        dt_actual = new_state.t - state.t
        _accumulate(accums, state, new_state, g, params, mean_rho, dt_actual)
        if final_step and dt_actual > 0.6 * dt:
            # the step was not halved by the positivity rescue: land exactly
            new_state = State(t_end, new_state.rho, new_state.mom,
                              new_state.formulation)
        state = new_state
        n_steps += 1
        if state.t >= t_end:
            take_snapshot(state)
        elif state.t + 1e-14 >= next_snap:
            take_snapshot(state)
            while next_snap <= state.t + 1e-14:
                next_snap += config.snapshot_every

    return Trajectory(
        grid=g, params=params, config=config, init_summary=summary,
        mean_rho=mean_rho, snapshots=snapshots, final_state=state,
        accums=accums, n_steps=n_steps,
        wall_seconds=_time.perf_counter() - started,
    )
