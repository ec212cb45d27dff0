"""Shared fixtures: the shipped cases, run once per session."""
from __future__ import annotations

import numpy as np
import pytest

from congestion_sim.grid import Grid
from congestion_sim.initial_data import InitRecipe, make_initial_data
from congestion_sim.model import ModelParams, U_FORM, W_FORM
from congestion_sim.solver import SchemeConfig, run_simulation

SHIPPED_SCHEME = dict(cfl=0.1, dt_max=2e-3, dt_init=5e-4, snapshot_every=0.05)

STANDARD_RECIPE = InitRecipe(kind="cosine", rho_mean=0.8, rho_amp=0.1, w_amp=0.2)
TRAVELLING_RECIPE = InitRecipe(kind="cosine", rho_mean=0.8, rho_amp=0.1,
                               w_amp=0.2, w_mean=0.3)
CONSTANT_RECIPE = InitRecipe(kind="cosine", rho_mean=0.8, rho_amp=0.0, w_amp=0.0)


def run_case(recipe: InitRecipe, formulation: str, n_cells: int,
             t_end: float = 0.5, gamma: float = 10.0, **overrides):
    scheme_args = {**SHIPPED_SCHEME, **overrides}
    g = Grid(n_cells)
    params = ModelParams(gamma=gamma)
    scheme = SchemeConfig(formulation=formulation, **scheme_args)
    init, summary = make_initial_data(recipe, g, params, formulation)
    traj = run_simulation(init, g, params, scheme, t_end)
    return traj, summary, g


@pytest.fixture(scope="session")
def standard_w_256():
    return run_case(STANDARD_RECIPE, W_FORM, 256)


@pytest.fixture(scope="session")
def standard_w_512():
    return run_case(STANDARD_RECIPE, W_FORM, 512)


@pytest.fixture(scope="session")
def standard_u_256():
    return run_case(STANDARD_RECIPE, U_FORM, 256)


@pytest.fixture(scope="session")
def standard_u_512():
    return run_case(STANDARD_RECIPE, U_FORM, 512)


@pytest.fixture(scope="session")
def travelling_w_256():
    return run_case(TRAVELLING_RECIPE, W_FORM, 256)


@pytest.fixture(scope="session")
def travelling_w_512():
    return run_case(TRAVELLING_RECIPE, W_FORM, 512)


@pytest.fixture(scope="session")
def constant_u_256():
    return run_case(CONSTANT_RECIPE, U_FORM, 256)


def observed_order(coarse: float, fine: float) -> float:
    return float(np.log2(coarse / fine))
