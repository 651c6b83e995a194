"""Compare the closed-loop controller with its two open-loop counterparts under disturbance."""
import statistics
import sys

from fblmpc.baselines import run_offline_joint, run_offline_mpc
from fblmpc.mpc import run_mission
from fblmpc.scenario import default_scenario, make_streams, place_users

delta = float(sys.argv[1]) if len(sys.argv) > 1 else 6.0
seeds = range(int(sys.argv[2]) if len(sys.argv) > 2 else 3)

cfg = default_scenario().replace(disturbance=delta)
runners = {"online-mpc": run_mission, "offline-mpc": run_offline_mpc, "offline-joint": run_offline_joint}
final = {name: [] for name in runners}
for seed in seeds:
    for name, run in runners.items():
        st = make_streams(seed)
        tr = run(cfg, place_users(cfg, st.users), st.disturbance, st.nlos_key)
        final[name].append(tr.terminal_distance)
        print(f"seed {seed} {name:14s} {tr.termination:15s} {tr.terminal_distance:7.2f} m")
for name, ds in final.items():
    print(f"{name:14s} median terminal distance {statistics.median(ds):.2f} m")
