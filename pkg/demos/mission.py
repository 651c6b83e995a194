"""Fly one closed-loop mission and print a per-slot log."""
import sys

from fblmpc.mpc import run_mission
from fblmpc.scenario import default_scenario, make_streams, place_users

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
delta = float(sys.argv[2]) if len(sys.argv) > 2 else 0.0

cfg = default_scenario().replace(disturbance=delta)
st = make_streams(seed)
trace = run_mission(cfg, place_users(cfg, st.users), st.disturbance, st.nlos_key)

print(f"{'t':>3} {'x':>8} {'y':>8} {'z':>8} {'speed':>6} {'P_tot':>7}  rates (nats)")
for s, rates in zip(trace.steps, trace.rates()):
    speed = float((s.v ** 2).sum() ** 0.5)
    print(f"{s.t:3d} {s.r[0]:8.2f} {s.r[1]:8.2f} {s.r[2]:8.2f} {speed:6.2f} {s.p_tot:7.2f}  "
          + " ".join(f"{x:.3f}" for x in rates))
for k, v in trace.summary().items():
    print(f"{k}: {v}")
