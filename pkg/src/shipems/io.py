"""Scenario ingestion, synthetic scenario generation, result persistence.

Scenario files are YAML documents mirroring :class:`ScenarioSpec`; the
demand matrix is either inline (per-load arrays), constant (per-load
scalars plus a step count), or a separate CSV table whose header row
carries the load ids and whose rows are mission steps.  All times are
seconds, powers MW, energy MJ, and SoC a fraction in [0, 1]; files
using percent-style SoC values are rejected outright to avoid the
80-vs-0.8 ambiguity.

Result bundles pair a ``summary.json`` with a ``trajectory.csv`` whose
columns are stable: step, time_s, one service column per load, one
power column per generator and storage unit, one SoC column per
storage unit, then solve_ms / status / fallback.  Trajectories are
re-audited against the model invariants at write time; a violating
bundle is never written silently.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np
import yaml

from .engine import MissionResult, validate_trajectory
from .errors import (BundleInvariantError, DimensionError, ParseError,
                     SchemaError)
from .model import (DEFAULT_SOC_MAX, DEFAULT_SOC_MIN, GeneratorSpec, LoadSpec,
                    ScenarioSpec, StorageClass, StorageSpec)

DEFAULT_DT_S = 0.5
DEFAULT_HORIZON_STEPS = 60
DEFAULT_MISSION_S = 600.0


def _require(cond, path, message):
    if not cond:
        raise SchemaError(f"{path}: {message}")


def _get_num(doc, key, path, default=None, required=False):
    if key not in doc or doc[key] is None:
        if required:
            raise SchemaError(f"{path}.{key}: missing required field")
        return default
    val = doc[key]
    _require(isinstance(val, (int, float)) and not isinstance(val, bool),
             f"{path}.{key}", f"expected a number, got {val!r}")
    return float(val)


def _get_str(doc, key, path, default=None, required=False):
    if key not in doc or doc[key] is None:
        if required:
            raise SchemaError(f"{path}.{key}: missing required field")
        return default
    _require(isinstance(doc[key], str), f"{path}.{key}", "expected a string")
    return doc[key]


def _parse_load(doc, idx):
    path = f"loads[{idx}]"
    _require(isinstance(doc, dict), path, "expected a mapping")
    steps = doc.get("steps")
    if steps is not None:
        _require(isinstance(steps, int) and steps >= 1, f"{path}.steps",
                 "expected a positive integer step count")
    try:
        return LoadSpec(id=_get_str(doc, "id", path, required=True),
                        rated_mw=_get_num(doc, "rated_mw", path, required=True),
                        weight=_get_num(doc, "weight", path, required=True),
                        steps=steps, name=_get_str(doc, "name", path, default=""))
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}")


def _parse_generator(doc, idx, dt, steps):
    path = f"generators[{idx}]"
    _require(isinstance(doc, dict), path, "expected a mapping")
    try:
        gen = GeneratorSpec(
            id=_get_str(doc, "id", path, required=True),
            p_min_mw=_get_num(doc, "p_min_mw", path, default=0.0),
            p_max_mw=_get_num(doc, "p_max_mw", path, required=True),
            ramp_down_mw_s=_get_num(doc, "ramp_down_mw_s", path, required=True),
            ramp_up_mw_s=_get_num(doc, "ramp_up_mw_s", path, required=True),
            initial_mw=_get_num(doc, "initial_mw", path, default=0.0),
            name=_get_str(doc, "name", path, default=""))
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}")
    avail = np.ones(steps, dtype=bool)
    if "available" in doc and doc["available"] is not None:
        seq = doc["available"]
        _require(isinstance(seq, list), f"{path}.available", "expected a list")
        if len(seq) != steps:
            raise DimensionError(
                f"{path}.available: {len(seq)} entries for {steps} steps")
        avail = np.array([bool(v) for v in seq])
    for k, window in enumerate(doc.get("outages") or []):
        wpath = f"{path}.outages[{k}]"
        _require(isinstance(window, (list, tuple)) and len(window) == 2, wpath,
                 "expected [from_s, to_s]")
        t_from, t_to = float(window[0]), float(window[1])
        _require(t_from < t_to, wpath, "need from_s < to_s")
        idx_from = int(np.ceil(t_from / dt - 1e-9))
        idx_to = int(np.ceil(t_to / dt - 1e-9))
        avail[max(idx_from, 0):min(idx_to, steps)] = False
    return gen, avail


def _parse_storage(doc, idx):
    path = f"storage[{idx}]"
    _require(isinstance(doc, dict), path, "expected a mapping")
    kind_raw = _get_str(doc, "class", path, required=True)
    try:
        kind = StorageClass(kind_raw.lower())
    except ValueError:
        raise SchemaError(f"{path}.class: unknown storage class {kind_raw!r} "
                          f"(battery or supercapacitor)")
    for key in ("soc_min", "soc_max", "initial_soc"):
        val = _get_num(doc, key, path)
        if val is not None and val > 1.0:
            raise SchemaError(f"{path}.{key}: SoC values are fractions in "
                              f"[0, 1], got {val} (percent-style rejected)")
    try:
        return StorageSpec(
            id=_get_str(doc, "id", path, required=True),
            kind=kind,
            p_min_mw=_get_num(doc, "p_min_mw", path, required=True),
            p_max_mw=_get_num(doc, "p_max_mw", path, required=True),
            ramp_down_mw_s=_get_num(doc, "ramp_down_mw_s", path, required=True),
            ramp_up_mw_s=_get_num(doc, "ramp_up_mw_s", path, required=True),
            capacity_mj=_get_num(doc, "capacity_mj", path, required=True),
            soc_min=_get_num(doc, "soc_min", path, default=DEFAULT_SOC_MIN),
            soc_max=_get_num(doc, "soc_max", path, default=DEFAULT_SOC_MAX),
            initial_soc=_get_num(doc, "initial_soc", path, default=0.5),
            terminal_priority=_get_num(doc, "terminal_priority", path),
            initial_mw=_get_num(doc, "initial_mw", path, default=0.0),
            name=_get_str(doc, "name", path, default=""))
    except ValueError as exc:
        raise SchemaError(f"{path}: {exc}")


def _read_demand_csv(path: Path, load_ids):
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise ParseError(f"demand.file: cannot read {path}: {exc}")
    if not rows:
        raise DimensionError(f"demand.file: {path} is empty")
    header = [h.strip() for h in rows[0]]
    if header != list(load_ids):
        raise DimensionError(
            f"demand.file {path.name}: header {header} does not match "
            f"declared load ids {list(load_ids)}")
    try:
        data = np.array([[float(v) for v in row] for row in rows[1:]])
    except ValueError as exc:
        raise ParseError(f"demand.file {path.name}: non-numeric entry: {exc}")
    if data.ndim != 2 or data.shape[1] != len(load_ids):
        raise DimensionError(
            f"demand.file {path.name}: expected {len(load_ids)} columns")
    return data.T  # (n_loads, steps)


def _parse_demand(doc, load_ids, dt, declared_steps, base_dir: Path):
    _require(isinstance(doc, dict), "demand", "expected a mapping")
    modes = [k for k in ("file", "inline", "constant") if doc.get(k) is not None]
    _require(len(modes) == 1, "demand",
             f"need exactly one of file/inline/constant, got {modes or 'none'}")
    mode = modes[0]
    if mode == "file":
        return _read_demand_csv(base_dir / doc["file"], load_ids)
    if mode == "inline":
        table = doc["inline"]
        _require(isinstance(table, dict), "demand.inline", "expected a mapping")
        missing = [i for i in load_ids if i not in table]
        extra = [i for i in table if i not in load_ids]
        if missing or extra:
            raise DimensionError(
                f"demand.inline: load ids mismatch (missing {missing}, "
                f"unknown {extra})")
        lengths = {len(table[i]) for i in load_ids}
        if len(lengths) != 1:
            raise DimensionError(f"demand.inline: unequal series lengths {sorted(lengths)}")
        return np.array([[float(v) for v in table[i]] for i in load_ids])
    # constant demand needs a step count from somewhere
    table = doc["constant"]
    _require(isinstance(table, dict), "demand.constant", "expected a mapping")
    missing = [i for i in load_ids if i not in table]
    extra = [i for i in table if i not in load_ids]
    if missing or extra:
        raise DimensionError(
            f"demand.constant: load ids mismatch (missing {missing}, unknown {extra})")
    steps = declared_steps or int(round(DEFAULT_MISSION_S / dt))
    col = np.array([float(table[i]) for i in load_ids])
    return np.tile(col[:, None], (1, steps))


def parse_scenario(doc: dict, base_dir: Path = Path(".")):
    """Validate a scenario document and build the spec.

    Returns (ScenarioSpec, horizon_steps).  Defaults: dt 0.5 s, horizon
    60 steps, 600 s mission when constant demand gives no step count.
    """
    if not isinstance(doc, dict):
        raise SchemaError("top level: expected a mapping")
    dt = _get_num(doc, "dt_s", "top level", default=DEFAULT_DT_S)
    _require(dt > 0, "dt_s", "must be > 0")
    horizon = doc.get("horizon_steps", DEFAULT_HORIZON_STEPS)
    _require(isinstance(horizon, int) and horizon >= 1, "horizon_steps",
             "expected a positive integer")

    _require(isinstance(doc.get("loads"), list) and doc["loads"], "loads",
             "expected a non-empty list")
    loads = [_parse_load(d, i) for i, d in enumerate(doc["loads"])]
    load_ids = [ld.id for ld in loads]

    declared_steps = doc.get("steps")
    if declared_steps is None and doc.get("mission_s") is not None:
        declared_steps = int(round(_get_num(doc, "mission_s", "top level") / dt))
    if declared_steps is not None:
        _require(isinstance(declared_steps, int) and declared_steps >= 1,
                 "steps", "expected a positive integer")

    _require("demand" in doc, "demand", "missing required section")
    demand = _parse_demand(doc["demand"], load_ids, dt, declared_steps,
                           base_dir)
    steps = demand.shape[1]
    if declared_steps is not None and declared_steps != steps:
        raise DimensionError(
            f"steps: declared {declared_steps} but demand has {steps}")

    gens, avail_rows = [], []
    for i, d in enumerate(doc.get("generators") or []):
        gen, avail = _parse_generator(d, i, dt, steps)
        gens.append(gen)
        avail_rows.append(avail)
    availability = np.array(avail_rows) if gens else None
    if availability is not None and availability.all():
        availability = None

    storage = [_parse_storage(d, i) for i, d in enumerate(doc.get("storage") or [])]

    weight_override = None
    if doc.get("weight_override") is not None:
        table = doc["weight_override"]
        _require(isinstance(table, dict), "weight_override", "expected a mapping")
        extra = [i for i in table if i not in load_ids]
        if extra:
            raise DimensionError(f"weight_override: unknown load ids {extra}")
        weight_override = np.array([
            float(table.get(i, loads[k].weight)) for k, i in enumerate(load_ids)])

    try:
        spec = ScenarioSpec(dt_s=dt, loads=loads, generators=gens,
                            storage=storage, demand_mw=demand,
                            generator_available=availability,
                            weight_override=weight_override,
                            name=_get_str(doc, "name", "top level", default=""))
    except ValueError as exc:
        raise SchemaError(str(exc))
    return spec, horizon


def load_scenario(path) -> ScenarioSpec:
    """Read, schema-check and materialize a scenario file."""
    spec, _ = load_scenario_with_horizon(path)
    return spec


def load_scenario_with_horizon(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ParseError(f"{path.name}: invalid YAML: {exc}")
    return parse_scenario(doc, base_dir=path.parent)


def scenario_document(spec: ScenarioSpec, horizon_steps: int = DEFAULT_HORIZON_STEPS) -> dict:
    """Round-trippable plain document for a spec (demand kept inline)."""
    doc = {"name": spec.name, "dt_s": spec.dt_s, "horizon_steps": horizon_steps,
           "steps": spec.steps}
    doc["loads"] = []
    for ld in spec.loads:
        entry = {"id": ld.id, "rated_mw": ld.rated_mw, "weight": ld.weight}
        if ld.steps is not None:
            entry["steps"] = ld.steps
        if ld.name:
            entry["name"] = ld.name
        doc["loads"].append(entry)
    doc["generators"] = []
    avail = spec.availability()
    for g, gen in enumerate(spec.generators):
        entry = {"id": gen.id, "p_min_mw": gen.p_min_mw, "p_max_mw": gen.p_max_mw,
                 "ramp_down_mw_s": gen.ramp_down_mw_s,
                 "ramp_up_mw_s": gen.ramp_up_mw_s, "initial_mw": gen.initial_mw}
        if gen.name:
            entry["name"] = gen.name
        if spec.generator_available is not None and not avail[g].all():
            entry["available"] = [int(v) for v in avail[g]]
        doc["generators"].append(entry)
    doc["storage"] = []
    for sto in spec.storage:
        entry = {"id": sto.id, "class": sto.kind.value,
                 "p_min_mw": sto.p_min_mw, "p_max_mw": sto.p_max_mw,
                 "ramp_down_mw_s": sto.ramp_down_mw_s,
                 "ramp_up_mw_s": sto.ramp_up_mw_s,
                 "capacity_mj": sto.capacity_mj, "soc_min": sto.soc_min,
                 "soc_max": sto.soc_max, "initial_soc": sto.initial_soc,
                 "terminal_priority": sto.terminal_priority,
                 "initial_mw": sto.initial_mw}
        if sto.name:
            entry["name"] = sto.name
        doc["storage"].append(entry)
    doc["demand"] = {"inline": {ld.id: [float(v) for v in spec.demand_mw[i]]
                                for i, ld in enumerate(spec.loads)}}
    if spec.weight_override is not None:
        doc["weight_override"] = {ld.id: float(w) for ld, w in
                                  zip(spec.loads, spec.weight_override)}
    return doc


def save_scenario(spec_or_doc, path, horizon_steps: int = DEFAULT_HORIZON_STEPS):
    doc = spec_or_doc if isinstance(spec_or_doc, dict) \
        else scenario_document(spec_or_doc, horizon_steps)
    Path(path).write_text(yaml.safe_dump(doc, sort_keys=False, width=100000))


def scenarios_equal(a: ScenarioSpec, b: ScenarioSpec) -> bool:
    """Field-wise equality; numpy members compared exactly."""
    if (a.dt_s, a.loads, a.generators, a.storage, a.name) != \
            (b.dt_s, b.loads, b.generators, b.storage, b.name):
        return False
    if not np.array_equal(a.demand_mw, b.demand_mw):
        return False
    if not np.array_equal(a.availability(), b.availability()):
        return False
    wa = a.weight_override if a.weight_override is not None else np.empty(0)
    wb = b.weight_override if b.weight_override is not None else np.empty(0)
    return np.array_equal(wa, wb)


def synth_scenario(seed: int, n_loads: int = 8, n_generators: int = 2,
                   n_storage: int = 4, steps: int = 240, dt_s: float = 0.5,
                   shortfall: bool = True, surplus_margin: float = 1.05,
                   trip_after: float = 0.3, outage_s: float = 35.0,
                   horizon_steps: int = DEFAULT_HORIZON_STEPS) -> dict:
    """Deterministic synthetic mission document.

    The last load is a high-ramp-rate block: largest weight, pulsed
    demand whose rate of change far exceeds generator ramping.  The two
    lowest-weight loads are stepped, small and coarse (fine-grained
    integer blocks at the shedding margin breed near-tie search trees
    with no physical payoff).  With ``shortfall`` the largest generator
    drops out mid-mission for ``outage_s`` seconds; demand is scaled so
    the surviving capacity plus full storage power cannot carry the
    peak, which forces shedding during the episode regardless of how
    much energy is banked; otherwise generation covers the peak
    throughout.
    """
    if min(n_loads, n_generators, n_storage) < 1:
        raise ValueError("sizes must be positive")
    rng = np.random.default_rng(seed)
    mission_s = steps * dt_s

    n_base = n_loads - 1
    weights = np.round(np.linspace(0.05, 0.6, max(n_base, 1)), 4)
    rated = np.round(rng.uniform(6.0, 14.0, n_base), 3)
    rated[:2] = np.round(rng.uniform(2.5, 4.0, min(2, n_base)), 3)
    periods = rng.uniform(0.25, 0.9, n_base) * mission_s
    phases = rng.uniform(0, 1, n_base)

    t = np.arange(steps) * dt_s
    demand = {}
    loads = []
    for i in range(n_base):
        profile = rated[i] * (0.72 + 0.18 * np.sin(
            2 * np.pi * (t / periods[i] + phases[i])))
        profile = np.clip(profile, 0.4 * rated[i], rated[i])
        entry = {"id": f"L{i}", "rated_mw": float(rated[i]),
                 "weight": float(weights[i])}
        if i < 2:
            entry["steps"] = 2
        loads.append(entry)
        demand[f"L{i}"] = [float(round(v, 4)) for v in profile]

    # high ramp-rate block: pulsed square demand, top priority
    hrrl_rated = round(float(rng.uniform(0.8, 1.2)) * 20.0, 3)
    pulse = np.full(steps, 0.08 * hrrl_rated)
    period = max(int(steps * 0.18), 8)
    width = max(int(period * 0.45), 4)
    for start in range(int(steps * 0.1), steps, period):
        pulse[start:start + width] = hrrl_rated
    loads.append({"id": f"L{n_loads - 1}", "rated_mw": hrrl_rated,
                  "weight": 1.0, "name": "hrrl-block"})
    demand[f"L{n_loads - 1}"] = [float(round(v, 4)) for v in pulse]

    total = np.zeros(steps)
    for series in demand.values():
        total += np.asarray(series)
    peak = float(total.max())

    cap_total = surplus_margin * peak
    shares = np.full(n_generators, 1.0 / n_generators)
    if n_generators > 1:
        # the tripping unit carries most of the fleet so the outage bites
        shares = np.linspace(1.5, 0.5, n_generators)
        shares /= shares.sum()
    initial_total = min(float(total[0]), cap_total)
    gens = []
    for g in range(n_generators):
        p_max = round(float(cap_total * shares[g]), 3)
        gen = {"id": f"G{g}", "p_min_mw": 0.0, "p_max_mw": p_max,
               "ramp_down_mw_s": -1.0, "ramp_up_mw_s": 1.0,
               "initial_mw": round(float(initial_total * shares[g]), 3)}
        if shortfall and g == 0:
            trip_at = round(trip_after * mission_s, 3)
            trip_end = round(min(trip_at + outage_s, mission_s), 3)
            gen["outages"] = [[trip_at, trip_end]]
        gens.append(gen)

    socs = np.round(rng.permutation(np.linspace(0.3, 0.7, n_storage)), 3)
    storage = []
    for e in range(n_storage):
        if e % 2 == 0:
            storage.append({"id": f"B{e}", "class": "battery",
                            "p_min_mw": -10.0, "p_max_mw": 10.0,
                            "ramp_down_mw_s": -5.0, "ramp_up_mw_s": 5.0,
                            "capacity_mj": 1000.0, "soc_min": 0.1,
                            "soc_max": 0.8, "initial_soc": float(socs[e])})
        else:
            storage.append({"id": f"S{e}", "class": "supercapacitor",
                            "p_min_mw": -10.0, "p_max_mw": 10.0,
                            "ramp_down_mw_s": -100.0, "ramp_up_mw_s": 100.0,
                            "capacity_mj": 200.0, "soc_min": 0.1,
                            "soc_max": 0.8, "initial_soc": float(socs[e])})

    return {"name": f"synth-{seed}", "dt_s": dt_s, "horizon_steps": horizon_steps,
            "steps": steps, "loads": loads, "generators": gens,
            "storage": storage, "demand": {"inline": demand}}


def default_output_dir() -> Path:
    return Path(os.environ.get("SHIPEMS_OUT", "shipems-out"))


def write_result_bundle(result: MissionResult, scenario: ScenarioSpec,
                        out_dir, extras: dict | None = None) -> Path:
    """Persist summary + per-step trajectory; re-audits before writing."""
    violations = validate_trajectory(result, scenario)
    if violations:
        raise BundleInvariantError(
            f"refusing to write bundle: {len(violations)} trajectory "
            f"violations, first: {violations[0]}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    times_ms = result.solve_times * 1e3
    summary = {
        "scenario": result.scenario_name,
        "mode": result.mode,
        "horizon": result.horizon,
        "steps": result.steps,
        "dt_s": scenario.dt_s,
        "weights": {"throughput": result.weights.throughput,
                    "imbalance": result.weights.imbalance,
                    "terminal": result.weights.terminal},
        "operability": result.operability,
        "terms": {"served": result.terms.served,
                  "throughput": result.terms.throughput,
                  "imbalance": result.terms.imbalance,
                  "terminal_soc": result.terms.terminal_soc},
        "objective": result.objective(),
        "solve_time": {"total_s": float(result.solve_times.sum()),
                       "max_ms": float(times_ms.max()),
                       "mean_ms": float(times_ms.mean())},
        "fallback_count": len(result.fallbacks),
        "fully_optimal": result.fully_optimal,
    }
    if extras:
        summary.update(extras)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")

    fallback_steps = {t: reason for t, reason in result.fallbacks}
    header = (["step", "time_s"]
              + [f"o_{ld.id}" for ld in scenario.loads]
              + [f"pg_{g.id}" for g in scenario.generators]
              + [f"pe_{s.id}" for s in scenario.storage]
              + [f"soc_{s.id}" for s in scenario.storage]
              + ["solve_ms", "status", "fallback"])
    with open(out_dir / "trajectory.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(result.steps):
            row = [k, round(k * scenario.dt_s, 6)]
            row += [f"{v:.9g}" for v in result.load_fraction[:, k]]
            row += [f"{v:.9g}" for v in result.gen_power[:, k]]
            row += [f"{v:.9g}" for v in result.storage_power[:, k]]
            row += [f"{v:.9g}" for v in result.soc[:, k]]
            row += [f"{times_ms[k]:.3f}", result.statuses[k],
                    fallback_steps.get(k, "")]
            writer.writerow(row)
    return out_dir


def read_summary(out_dir) -> dict:
    return json.loads((Path(out_dir) / "summary.json").read_text())


def write_tuner_trace(trace, path):
    """Tuning trace as CSV: iteration, the three weights, merit."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "w_throughput", "w_imbalance",
                         "w_terminal", "merit"])
        for i, (w, m) in enumerate(trace):
            writer.writerow([i, f"{w[0]:.9g}", f"{w[1]:.9g}", f"{w[2]:.9g}",
                             f"{m:.9g}"])
