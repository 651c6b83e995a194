"""Parameter sweeps over missions or fixed flown paths, with CSV/JSON emission."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .baselines import (BaselineKind, FixedPath, fixed_path_rates, qos_satisfaction, run_offline_joint,
                        run_offline_mpc)
from .mpc import run_mission
from .scenario import ScenarioConfig, make_streams, place_users

SWEEP_SCHEMA_VERSION = 1

# sweep key -> (config field, caster)
SWEEP_PARAMS = {
    "p_com_max": ("p_com_max", float),
    "num_antennas": ("num_antennas", int),
    "blocklength": ("blocklength", float),
    "r_min": ("r_min", float),
    "disturbance": ("disturbance", float),
}

MISSION_SCHEMES = ("online-mpc", "offline-mpc", "offline-joint")
PATH_SCHEMES = tuple(k.value for k in (BaselineKind.BF_PROPOSED, BaselineKind.BF_ZF,
                                        BaselineKind.BF_MRT, BaselineKind.BF_EQUAL))

CSV_COLUMNS = ("sweep_value", "scheme", "seed", "metric", "value", "detail")


@dataclass(frozen=True)
class SweepSpec:
    param: str
    values: tuple
    schemes: tuple
    seeds: tuple
    fixed_trajectory: bool = False

    def __post_init__(self):
        if self.param not in SWEEP_PARAMS:
            raise ValueError(f"unknown sweep parameter {self.param!r}; known: {sorted(SWEEP_PARAMS)}")
        cast = SWEEP_PARAMS[self.param][1]
        object.__setattr__(self, "values", tuple(cast(v) for v in self.values))
        object.__setattr__(self, "schemes", tuple(self.schemes))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.values:
            raise ValueError("sweep grid is empty")
        if not self.seeds or not self.schemes:
            raise ValueError("a sweep needs at least one seed and one scheme")
        allowed = PATH_SCHEMES if self.fixed_trajectory else MISSION_SCHEMES
        bad = [s for s in self.schemes if s not in allowed]
        if bad:
            raise ValueError(f"schemes {bad} not available in this mode; choose from {allowed}")


@dataclass
class SweepResult:
    spec: SweepSpec
    rows: list = field(default_factory=list)        # (value, scheme, seed, metric, value, detail)
    failures: list = field(default_factory=list)    # (value, scheme, seed, reason)

    def aggregates(self) -> list[dict]:
        """Mean and sample standard deviation over seeds per (value, scheme, metric)."""
        groups: dict = {}
        for val, scheme, _seed, metric, x, _d in self.rows:
            if metric == "failure" or not math.isfinite(x):
                continue
            groups.setdefault((val, scheme, metric), []).append(x)
        out = []
        for (val, scheme, metric), xs in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])):
            arr = np.array(xs)
            out.append({"sweep_value": val, "scheme": scheme, "metric": metric, "n": len(xs),
                        "mean": float(arr.mean()),
                        "std": float(arr.std(ddof=1)) if len(xs) > 1 else 0.0})
        return out

    def mean(self, value, scheme, metric) -> float:
        for a in self.aggregates():
            if a["sweep_value"] == value and a["scheme"] == scheme and a["metric"] == metric:
                return a["mean"]
        raise KeyError((value, scheme, metric))


def _rate_metrics(rates: np.ndarray, r_min: float) -> dict:
    return {
        "sum_rate": float(rates.sum(axis=1).mean()),
        "min_rate": float(rates.min(axis=1).mean()),
        "satisfaction_pct": qos_satisfaction(rates, r_min),
    }


def reference_path(cfg: ScenarioConfig, seed: int):
    """Undisturbed closed-loop flight used as the fixed path of a seed."""
    st = make_streams(seed)
    users = place_users(cfg, st.users)
    trace = run_mission(cfg.replace(disturbance=0.0), users, st.disturbance, st.nlos_key)
    return users, FixedPath.from_trace(trace), st.nlos_key


def _mission_cell(cfg: ScenarioConfig, scheme: str, seed: int) -> dict:
    st = make_streams(seed)
    users = place_users(cfg, st.users)
    if scheme == "online-mpc":
        tr = run_mission(cfg, users, st.disturbance, st.nlos_key)
    elif scheme == "offline-mpc":
        tr = run_offline_mpc(cfg, users, st.disturbance, st.nlos_key)
    else:
        tr = run_offline_joint(cfg, users, st.disturbance, st.nlos_key)
    out = {"terminal_distance": tr.terminal_distance, "steps": float(len(tr.steps)),
           "energy": tr.energy if tr.steps else 0.0,
           "arrived": 1.0 if tr.termination == "arrived" else 0.0}
    if tr.steps:
        out.update(_rate_metrics(tr.rates(), cfg.r_min))
    return out


def _path_cell(cfg: ScenarioConfig, scheme: str, ref) -> dict:
    users, path, key = ref
    return _rate_metrics(fixed_path_rates(scheme, cfg, users, path, key), cfg.r_min)


def _run_cell(args):
    cfg, spec, value, scheme, seed, ref = args
    field_name = SWEEP_PARAMS[spec.param][0]
    try:
        cell_cfg = cfg.replace(**{field_name: value})
        if spec.fixed_trajectory:
            metrics = _path_cell(cell_cfg, scheme, ref)
        else:
            metrics = _mission_cell(cell_cfg, scheme, seed)
        return metrics, None
    except Exception as exc:  # one bad cell must not stop the sweep
        return None, f"{type(exc).__name__}: {exc}"


def run_sweep(spec: SweepSpec, cfg: ScenarioConfig, workers: int = 1, paths: Optional[dict] = None) -> SweepResult:
    """Evaluate every grid value x seed x scheme cell.

    In fixed-trajectory mode each seed's path is flown once with the base
    config and reused for all grid values; ``paths`` (seed -> result of
    ``reference_path``) supplies them instead.  ``workers`` > 1 runs cells in
    a process pool; row order is the same either way.
    """
    refs = dict(paths or {})
    if spec.fixed_trajectory:
        for seed in spec.seeds:
            if seed in refs:
                continue
            try:
                refs[seed] = reference_path(cfg, seed)
            except Exception as exc:
                refs[seed] = exc
    cells = [(cfg, spec, v, sch, seed, refs.get(seed)) for v in spec.values for seed in spec.seeds
             for sch in spec.schemes]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_run_cell, cells))
    else:
        outcomes = [_run_cell(c) if not isinstance(c[5], Exception) else
                    (None, f"reference path: {c[5]!r}") for c in cells]
    res = SweepResult(spec)
    for (_, _, v, sch, seed, _), (metrics, err) in zip(cells, outcomes):
        if err is not None:
            res.rows.append((v, sch, seed, "failure", math.nan, err))
            res.failures.append((v, sch, seed, err))
            continue
        for name in sorted(metrics):
            res.rows.append((v, sch, seed, name, float(metrics[name]), ""))
    return res


# -- emission -------------------------------------------------------------------

def to_csv(result: SweepResult, stamp: Optional[str] = None) -> str:
    buf = io.StringIO()
    stamp = stamp or time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())
    buf.write(f"# generated {stamp}\n")
    buf.write(f"# schema_version={SWEEP_SCHEMA_VERSION} param={result.spec.param}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_COLUMNS)
    for val, sch, seed, metric, x, detail in result.rows:
        wr.writerow([repr(val), sch, seed, metric, repr(float(x)), detail])
    return buf.getvalue()


def read_csv(text: str) -> list[tuple]:
    """Parse rows written by ``to_csv`` back into typed tuples."""
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    rd = csv.reader(lines)
    header = next(rd)
    if tuple(header) != CSV_COLUMNS:
        raise ValueError(f"unexpected columns {header}")
    out = []
    for val, sch, seed, metric, x, detail in rd:
        num = float(val)
        out.append((int(num) if num.is_integer() and "." not in val else num, sch, int(seed), metric,
                    float(x), detail))
    return out


def to_json(result: SweepResult) -> str:
    s = result.spec
    doc = {
        "schema_version": SWEEP_SCHEMA_VERSION,
        "param": s.param,
        "values": list(s.values),
        "schemes": list(s.schemes),
        "seeds": list(s.seeds),
        "fixed_trajectory": s.fixed_trajectory,
        "aggregates": result.aggregates(),
        "failures": [{"sweep_value": v, "scheme": sch, "seed": seed, "reason": why}
                     for v, sch, seed, why in result.failures],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def emit(result: SweepResult, out_dir: str, formats=("csv", "json"), stamp: Optional[str] = None) -> list[str]:
    """Write sweep.csv and/or sweep.json under ``out_dir``; returns the paths."""
    if not result.rows:
        raise ValueError("nothing to emit")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for fmt in formats:
        path = os.path.join(out_dir, f"sweep.{fmt}")
        text = to_csv(result, stamp) if fmt == "csv" else to_json(result)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        paths.append(path)
    return paths
