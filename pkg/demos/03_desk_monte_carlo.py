"""A small Monte Carlo run over two of the eight designs.

Ten replications keep this under a couple of minutes; the acceptance suite
runs the full-size versions.  Columns are RMSE, MSE and bias against the
noiseless test targets.

    python3 demos/03_desk_monte_carlo.py [replications]
"""

import sys

from ccinls.simulation import ESTIMATORS, ScenarioConfig, run_scenario

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 10
designs = [ScenarioConfig("logistic", 1, 0.03, 25, replications=reps, rng_seed=1),
           ScenarioConfig("cobb", 2, 0.1, 25, replications=reps, rng_seed=1)]

for cfg in designs:
    print(f"\n{cfg.scenario_id}  ({reps} replications)")
    print(f"  {'estimator':<20}{'rmse':>9}{'mse':>9}{'bias':>9}")
    for row in run_scenario(cfg, ESTIMATORS):
        print(f"  {row.estimator:<20}{row.rmse:9.4f}{row.mse:9.4f}{row.bias:+9.4f}")
