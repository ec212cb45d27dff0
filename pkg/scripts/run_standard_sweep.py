#!/usr/bin/env python3
"""Run the shipped hard-congestion sweep and print the per-gamma table."""
import os
import sys

from congestion_sim.cli import main

HERE = os.path.dirname(os.path.abspath(__file__))
CONFIG = os.path.join(HERE, "..", "configs", "standard_sweep.cfg")

if __name__ == "__main__":
    code = main(["sweep", "--config", CONFIG])
    if code == 0:
        report = os.path.join(HERE, "..", "out", "standard_sweep", "sweep_report.csv")
        with open(report, encoding="utf-8") as fh:
            print(fh.read())
    sys.exit(code)
