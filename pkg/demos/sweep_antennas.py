"""Antenna-count sweep on a fixed path, written to demos/out/."""
import os

from fblmpc.experiments import SweepSpec, emit, run_sweep
from fblmpc.scenario import default_scenario

spec = SweepSpec("num_antennas", (4, 6, 8), ("bf-proposed", "bf-zf", "bf-mrt"), (0, 1), fixed_trajectory=True)
result = run_sweep(spec, default_scenario())
for agg in result.aggregates():
    if agg["metric"] == "sum_rate":
        print(f"M={agg['sweep_value']} {agg['scheme']:12s} {agg['mean']:.3f} +/- {agg['std']:.3f}")
out = os.path.join(os.path.dirname(os.path.abspath(__file__)), "out")
print("wrote", *emit(result, out))
