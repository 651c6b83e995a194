"""Replay one flown path with each beamformer and report QoS satisfaction over a rate-target grid."""
from fblmpc.baselines import FixedPath, fixed_path_rates, qos_satisfaction
from fblmpc.mpc import run_mission
from fblmpc.scenario import default_scenario, make_streams, place_users

cfg = default_scenario()
st = make_streams(0)
users = place_users(cfg, st.users)
path = FixedPath.from_trace(run_mission(cfg, users, st.disturbance, st.nlos_key))

grid = (0.1, 0.5, 1.0, 2.0, 3.0, 4.0)
print("scheme        " + " ".join(f"{g:>6}" for g in grid) + "   sum rate")
for kind in ("bf-proposed", "bf-zf", "bf-mrt", "bf-equal"):
    rates = fixed_path_rates(kind, cfg, users, path, st.nlos_key)
    pct = [qos_satisfaction(rates, g) for g in grid]
    print(f"{kind:13s} " + " ".join(f"{p:6.1f}" for p in pct) + f"   {rates.sum(axis=1).mean():.2f}")
