"""Small, fast runs of the main experiments (a few seconds on one core).

Usage: python3 scripts/quick_tour.py [OUTDIR]
"""

import sys

from quenchlab.cli_runner import ExperimentConfig, run

RUNS = [
    ("ladder", "pik", {"depth": 2000}),
    ("partition", "pik", {"N_R": 60}),
    ("tails", "pik", {"N_R": 2000, "n_lo": 50, "points": 6}),
    ("schwarzian", "pik", {"grid": 2000}),
    ("schwarzian", "gh", {"grid": 2000}),
    ("koebe", "pik", {"N": 500}),
    ("gh-validate", "gh", {}),
    ("tower-mass", "pik", {"L": 60, "K": 60, "step": 20}),
]


def main(out="results/tour"):
    for name, family, params in RUNS:
        cfg = ExperimentConfig(experiment=name, family=family, params=params, seeds=[0, 1], out=f"{out}/{family}")
        man = run(cfg)
        summary = man.summary.get("aggregate") or next(iter(man.summary["tasks"].values()))
        print(f"{name:12s} {family:4s} {man.status:7s} {summary}")


if __name__ == "__main__":
    main(*sys.argv[1:2])
