"""Compare the three protocol variants over a handful of seeds.

Writes the same regret.csv / comm.csv / summary.json files the command-line
entry point produces.  Run with:  python3 demos/04_variant_comparison.py
"""
from pathlib import Path

import numpy as np

from fedelim import ExperimentConfig, VARIANTS, run_many
from fedelim.cli import write_outputs

SEEDS = (0, 1, 2)
OUT = Path("demo_out")

results = {}
for variant in VARIANTS:
    config = ExperimentConfig(objective="doublesine", clients=10, horizon=5000,
                              shift_std=0.02, variant=variant, seeds=SEEDS)
    results[variant] = run_many(config)

print(f"doublesine, 10 clients, horizon 5000, shifts 0.02, seeds {SEEDS}")
print(f"{'variant':>12} {'final regret':>16} {'comm rounds':>12} {'transition t':>13}")
for variant in VARIANTS:
    agg = results[variant]
    transition = agg.stage_transition_t_mean
    print(f"{variant:>12} {agg.final_mean:10.2f} +- {agg.final_std:5.2f} "
          f"{agg.comm_rounds_mean:12.1f} "
          f"{'-' if transition is None else f'{transition:13.1f}'}")

write_outputs(results, OUT)
print(f"\nwrote {OUT}/regret.csv, {OUT}/comm.csv, {OUT}/summary.json")

# the regret curves themselves, coarsely
checkpoints = results["pfpne"].checkpoints
marks = [int(i) for i in np.linspace(0, len(checkpoints) - 1, 6)]
print("\naverage cumulative regret at selected checkpoints:")
header = "t:      " + "".join(f"{checkpoints[i]:>9d}" for i in marks)
print(header)
for variant in VARIANTS:
    curve = results[variant].mean_curve
    print(f"{variant:>8}" + "".join(f"{curve[i]:9.1f}" for i in marks))
