"""Regenerate ``synthetic_panel.csv``: a municipality-style panel with a known
monotone population-jobs relation.

    python3 data/make_synthetic_panel.py

The relation, noise level and seed are written to ``synthetic_panel.json``.
"""

import csv
import json
import math
from pathlib import Path

import numpy as np

SEED = 20240501
SIGMA = 600.0
YEARS = range(2012, 2022)
N_REGULAR, N_SMALL = 120, 20


def population(jobs):
    """Monotone and S-shaped around 15k jobs."""
    jobs = np.asarray(jobs, dtype=float)
    return 2.0 * jobs + 15000.0 / (1.0 + np.exp(-(jobs - 15000.0) / 3000.0))


def main(out_dir: Path = Path(__file__).resolve().parent) -> None:
    rng = np.random.default_rng(SEED)
    level = {f"M{i:03d}": float(x) for i, x in
             enumerate(np.exp(rng.uniform(math.log(6000), math.log(60000), N_REGULAR)), start=1)}
    level.update({f"S{i:03d}": float(x) for i, x in
                  enumerate(rng.uniform(800, 3500, N_SMALL), start=1)})
    rows = []
    for mid, base in level.items():
        for year in YEARS:
            jobs = base * (1.0 + 0.01 * rng.standard_normal())
            pop = population(jobs) + SIGMA * rng.standard_normal()
            rows.append((mid, year, round(pop, 3), round(jobs, 3)))
    # a capital-city outlier far off the common relation
    for year in YEARS:
        rows.append(("Helsinki", year, 650000.0 + 5000 * (year - 2012), 420000.0))
    with open(out_dir / "synthetic_panel.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "year", "population", "jobs"])
        w.writerows(rows)
    meta = {"seed": SEED, "sigma": SIGMA, "years": [min(YEARS), max(YEARS)],
            "relation": "population = 2*jobs + 15000/(1+exp(-(jobs-15000)/3000)) + N(0, sigma^2)",
            "jobs": "per-id level times (1 + 0.01 N(0,1)) each year",
            "regular_ids": N_REGULAR, "small_ids": N_SMALL, "outlier": "Helsinki"}
    (out_dir / "synthetic_panel.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
