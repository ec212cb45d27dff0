#!/usr/bin/env python3
"""Print manufactured-solution convergence tables for both formulations."""
from congestion_sim.model import U_FORM, W_FORM
from congestion_sim.verify import CASES, convergence_study

if __name__ == "__main__":
    for name in ("travelling_velocity", "travelling_wave"):
        for formulation in (U_FORM, W_FORM):
            print(f"== {name} / {formulation}")
            print(convergence_study(CASES[name], (64, 128, 256),
                                    formulation=formulation).table())
            print()
