"""Acceptance suite: one test per exit criterion, each printing a verdict.

Tolerances come from the shared constants table in the diagnostics
module; refinement checks demand observed order >= TOL.min_order under
one grid doubling.
"""
import time

import numpy as np
import pytest

from conftest import SHIPPED_SCHEME, STANDARD_RECIPE, observed_order, run_case
import congestion_sim.diagnostics as diag
from congestion_sim.diagnostics import TOL
from congestion_sim.grid import Grid, norm
from congestion_sim.model import ModelParams, U_FORM, W_FORM
from congestion_sim.solver import SchemeConfig, step_W_transport
from congestion_sim.sweep import SweepConfig, run_sweep
from congestion_sim.verify import CASES, convergence_study, dense_step_oracle

GAMMAS = (5.0, 10.0, 20.0, 40.0, 80.0)


def verdict(label: str, ok: bool, detail: str) -> None:
    print(f"[acceptance] {label}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"{label}: {detail}"


@pytest.fixture(scope="module")
def standard_sweep_report():
    scheme = SchemeConfig(formulation=W_FORM, **SHIPPED_SCHEME)
    config = SweepConfig(gammas=GAMMAS, recipe=STANDARD_RECIPE, n_cells=256,
                         t_end=0.5, scheme=scheme)
    started = time.perf_counter()
    report = run_sweep(config)
    return report, time.perf_counter() - started


def test_c01_mass_conservation(standard_w_256, standard_u_256,
                               travelling_w_256, constant_u_256):
    worst = 0.0
    slowest = 0.0
    for traj, _, _ in (standard_w_256, standard_u_256, travelling_w_256,
                       constant_u_256):
        mass = traj.series("mass")
        worst = max(worst, float(np.max(np.abs(mass - mass[0])) / mass[0]))
        slowest = max(slowest, traj.wall_seconds)
    verdict("C1 mass conservation", worst <= TOL.exact and slowest <= 60.0,
            f"max rel drift {worst:.3e}, slowest run {slowest:.1f}s")


def test_c02_basic_energy_band_and_decay(standard_u_256, standard_u_512,
                                         standard_w_256, standard_w_512):
    ok = True
    details = []
    for name, coarse, fine in (("u_form", standard_u_256, standard_u_512),
                               ("w_form", standard_w_256, standard_w_512)):
        magnitudes = []
        for traj, summary, _ in (coarse, fine):
            res = traj.series("energy_residual")
            in_band = bool(np.all(res <= TOL.energy_abs)
                           and np.all(res >= -TOL.energy_frac * summary.E1))
            ok = ok and in_band
            magnitudes.append(float(np.max(np.abs(res))))
        order = observed_order(magnitudes[0], magnitudes[1])
        ok = ok and order >= TOL.min_order
        details.append(f"{name}: |res|={magnitudes[0]:.3e} order={order:.2f}")
    verdict("C2 basic energy", ok, "; ".join(details))


def test_c03_additional_energy(standard_w_256, standard_w_512,
                               travelling_w_256, constant_u_256):
    ok = True
    rises = []
    for traj, _, _ in (standard_w_256, travelling_w_256, constant_u_256):
        ke_w = traj.series("ke_w")
        rise = float(np.max(np.diff(ke_w), initial=0.0))
        rises.append(rise)
        ok = ok and rise <= TOL.ke_w_rel * (1.0 + ke_w[0])
    defects = [float(np.max(np.abs(traj.series("H_balance_residual"))))
               for traj, _, _ in (standard_w_256, standard_w_512)]
    order = observed_order(defects[0], defects[1])
    ok = ok and order >= TOL.min_order
    verdict("C3 additional energy", ok,
            f"max ke_w rise {max(rises):.3e}, H-balance order {order:.2f}")


def test_c04_w_maximum_principle(travelling_w_256, travelling_w_512):
    # monotone transport integrator: per-step slack at rounding level
    rng = np.random.default_rng(2026)
    g = Grid(64)
    worst_step = 0.0
    steps = 0
    for _ in range(100):
        W = rng.normal(size=64) * rng.uniform(0.5, 5.0)
        u = rng.normal(size=64)
        dt = rng.uniform(0.05, 1.0) * g.dx / max(np.max(np.abs(u)), 1e-9)
        for _ in range(100):
            new = step_W_transport(W, u, g, dt)
            scale = max(1.0, float(np.max(np.abs(W))))
            worst_step = max(worst_step,
                             (np.max(new) - np.max(W)) / scale,
                             (np.min(W) - np.min(new)) / scale)
            W = new
            steps += 1
    ok = steps == 10_000 and worst_step <= TOL.w_transport_step

    # reconstructed potential from full w-form runs of a smooth case with
    # the desired velocity bounded away from zero
    drifts = []
    for traj, _, _ in (travelling_w_256, travelling_w_512):
        check = diag.W_max_principle_check(traj.series("W_max"),
                                           reconstructed=True)
        ok = ok and check.passed
        drifts.append(max(check.worst, 0.0))
    decaying = (drifts[0] <= 1e-10
                or observed_order(drifts[0], max(drifts[1], 1e-300)) >= TOL.min_order)
    ok = ok and decaying
    verdict("C4 W maximum principle", ok,
            f"{steps} transport steps, worst slack {worst_step:.2e}; "
            f"reconstructed drifts {drifts[0]:.2e}/{drifts[1]:.2e}")


def test_c05_quantitative_lower_bound():
    worst = np.inf
    for gamma in GAMMAS:
        traj, _, _ = run_case(STANDARD_RECIPE, W_FORM, 256, t_end=1.0,
                              gamma=gamma)
        worst = min(worst, float(np.min(traj.series("lower_bound_margin"))))
    verdict("C5 quantitative lower bound", worst >= -TOL.lower_bound_abs,
            f"min margin {worst:+.3e} over gammas {GAMMAS}")


def test_c06_rhoW2_conservation(standard_w_256, standard_w_512):
    drifts = []
    ok = True
    for traj, _, _ in (standard_w_256, standard_w_512):
        check = diag.rhoW2_conservation_check(traj.series("rhoW2"))
        ok = ok and check.passed
        drifts.append(check.worst)
    order = observed_order(drifts[0], drifts[1])
    ok = ok and order >= TOL.min_order
    verdict("C6 conserved rho W^2", ok,
            f"drift {drifts[0]:.3e} -> {drifts[1]:.3e}, order {order:.2f}")


def test_c07_hard_congestion_trend(standard_sweep_report):
    report, wall = standard_sweep_report
    rows = report.rows
    ok = not any(r.failed for r in rows)
    switching = [r.switching_residual_max for r in rows]
    ok = ok and all(b < a for a, b in zip(switching, switching[1:]))
    ok = ok and switching[-1] <= 0.05 * switching[0]
    excess = rows[-1].max_rho - 1.0
    ok = ok and excess <= 0.1
    ok = ok and wall <= 900.0
    verdict("C7 hard-congestion trend", ok,
            f"switching {switching[0]:.3e} -> {switching[-1]:.3e} "
            f"(ratio {switching[-1]/switching[0]:.3f}), "
            f"max_rho-1 at gamma=80: {excess:+.3f}, sweep wall {wall:.1f}s")


def test_c08_potential_estimate_machinery(standard_w_256, standard_sweep_report):
    traj, _, g = standard_w_256
    _, checks = diag.psi_test_function(traj, g)
    ok = checks["periodicity"].worst <= TOL.psi_periodic
    ok = ok and checks["gradient"].worst <= TOL.psi_gradient_dx * g.dx
    report, _ = standard_sweep_report
    plains = [r.I_plain_abs for r in report.rows]
    ok = ok and all(v <= 2.0 * plains[0] for v in plains)
    verdict("C8 potential-estimate machinery", ok,
            f"psi wrap {checks['periodicity'].worst:.1e}, "
            f"psi gradient {checks['gradient'].worst:.3e} (tol {TOL.psi_gradient_dx * g.dx:.3e}), "
            f"I_plain max/first {max(plains)/plains[0]:.2f}")


def test_c09_scheme_verification():
    ok = True
    details = []
    for formulation in (U_FORM, W_FORM):
        study = convergence_study(CASES["travelling_wave"], (64, 128, 256),
                                  formulation=formulation)
        order = study.orders_rho_l1[-1]
        ok = ok and 0.8 <= order <= 1.3
        ok = ok and 0.8 <= study.orders_mom_l1[-1] <= 1.3
        details.append(f"mms {formulation} order {order:.2f}")

    from congestion_sim.model import State, u_to_w
    from congestion_sim.solver import (
        solve_cyclic_tridiagonal, step_u_form, step_w_form,
    )
    g = Grid(8)
    params = ModelParams(2.0)
    rho = 1.0 + 0.1 * np.cos(2.0 * np.pi * g.x)
    pairs = [
        (State(0.0, rho, np.zeros(8), U_FORM), step_u_form,
         SchemeConfig(formulation=U_FORM)),
        (State(0.0, rho, rho * u_to_w(rho, np.zeros(8), g, params), W_FORM),
         step_w_form, SchemeConfig(formulation=W_FORM)),
    ]
    worst_oracle = 0.0
    for state, step, cfg in pairs:
        got = step(state, g, params, cfg, 1e-4)
        want = dense_step_oracle(state, g, params, cfg, 1e-4)
        worst_oracle = max(worst_oracle,
                           float(np.max(np.abs(got.rho - want.rho))),
                           float(np.max(np.abs(got.mom - want.mom))))
    ok = ok and worst_oracle <= 1e-12
    details.append(f"oracle err {worst_oracle:.1e}")

    rng = np.random.default_rng(7)
    worst_tri = 0.0
    for _ in range(100):
        n = int(rng.integers(4, 32))
        sub, sup = rng.normal(size=n), rng.normal(size=n)
        clo, chi = rng.normal(size=2)
        diag_v = np.abs(sub) + np.abs(sup) + abs(clo) + abs(chi) + 1.0 + rng.random(n)
        rhs = rng.normal(size=n)
        x = solve_cyclic_tridiagonal(sub, diag_v, sup, clo, chi, rhs)
        a = np.zeros((n, n))
        for i in range(n):
            a[i, i] = diag_v[i]
            if i > 0:
                a[i, i - 1] = sub[i]
            if i < n - 1:
                a[i, i + 1] = sup[i]
        a[0, n - 1] += clo
        a[n - 1, 0] += chi
        worst_tri = max(worst_tri, float(np.max(np.abs(x - np.linalg.solve(a, rhs)))))
    ok = ok and worst_tri <= 1e-12
    details.append(f"tridiag err {worst_tri:.1e}")
    verdict("C9 scheme verification", ok, "; ".join(details))


def test_c10_formulation_equivalence():
    diffs = []
    for n in (256, 512, 1024):
        tu, _, g = run_case(STANDARD_RECIPE, U_FORM, n, t_end=0.25)
        tw, _, _ = run_case(STANDARD_RECIPE, W_FORM, n, t_end=0.25)
        diffs.append(norm(tu.final_state.rho - tw.final_state.rho, g, "l1"))
    orders = [observed_order(a, b) for a, b in zip(diffs, diffs[1:])]
    ok = all(order >= TOL.min_order for order in orders)
    verdict("C10 formulation equivalence", ok,
            f"L1 diffs {['%.3e' % d for d in diffs]}, "
            f"orders {['%.2f' % o for o in orders]}")
