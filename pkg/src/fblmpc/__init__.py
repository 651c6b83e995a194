"""Receding-horizon joint trajectory and beamforming design for UAV links
under finite-blocklength rate constraints."""

from .baselines import (BaselineKind, beamform_baseline, qos_satisfaction, run_offline_joint,
                        run_offline_mpc)
from .experiments import SweepSpec, emit, run_sweep
from .fbl import FblParams, fbl_rate, inv_q
from .mpc import MissionTrace, disturbance, run_mission
from .optimizer import InfeasibleInit, Window, ao_loop
from .propulsion import PropulsionParams, propulsion_power
from .scenario import (ConfigError, ScenarioConfig, default_scenario, dump_scenario, load_scenario,
                       make_streams, place_users)

__all__ = [
    "BaselineKind", "ConfigError", "FblParams", "InfeasibleInit", "MissionTrace", "PropulsionParams",
    "ScenarioConfig", "SweepSpec", "Window", "ao_loop", "beamform_baseline", "default_scenario",
    "disturbance", "dump_scenario", "emit", "fbl_rate", "inv_q", "load_scenario", "make_streams",
    "place_users", "propulsion_power", "qos_satisfaction", "run_mission", "run_offline_joint",
    "run_offline_mpc", "run_sweep",
]
