"""Domain types for the ship power system.

Units are fixed across the package: powers in MW, energy in MJ, times
in seconds, state of charge as a fraction of capacity in [0, 1].
Positive storage power is discharge (supply side of the power balance),
so discharging lowers the state of charge.

Scenario objects are immutable after construction; builders treat them
as read-only, which makes concurrent window builds safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np


class StorageClass(Enum):
    BATTERY = "battery"
    SUPERCAPACITOR = "supercapacitor"


#: Default end-of-window SoC priorities per storage class.  Supercaps
#: are kept charged ahead of batteries so fast-ramp reserve survives the
#: mission; the ratio only fixes the ordering and scenario files may
#: override per unit.
DEFAULT_TERMINAL_PRIORITY = {
    StorageClass.BATTERY: 0.5,
    StorageClass.SUPERCAPACITOR: 1.0,
}

DEFAULT_SOC_MIN = 0.1
DEFAULT_SOC_MAX = 0.8


@dataclass(frozen=True)
class LoadSpec:
    """One shipboard load.

    ``steps`` is None for continuously modulatable loads; an integer
    n >= 1 means service levels are restricted to multiples of 1/n
    (n = 1 is a plain on/off load).
    """

    id: str
    rated_mw: float
    weight: float
    steps: Optional[int] = None
    name: str = ""

    def __post_init__(self):
        if not self.rated_mw > 0:
            raise ValueError(f"load {self.id}: rated_mw must be > 0")
        if not (np.isfinite(self.weight) and self.weight >= 0):
            raise ValueError(f"load {self.id}: weight must be finite and >= 0")
        if self.steps is not None and (int(self.steps) != self.steps or self.steps < 1):
            raise ValueError(f"load {self.id}: steps must be a positive integer")

    @property
    def is_stepped(self) -> bool:
        return self.steps is not None

    @property
    def step_size(self) -> float:
        """Service-fraction granularity (1/steps; 1.0 for continuous)."""
        return 1.0 / self.steps if self.steps else 1.0


@dataclass(frozen=True)
class GeneratorSpec:
    id: str
    p_min_mw: float
    p_max_mw: float
    ramp_down_mw_s: float
    ramp_up_mw_s: float
    initial_mw: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.p_min_mw > self.p_max_mw:
            raise ValueError(f"generator {self.id}: p_min > p_max")
        if not (self.ramp_down_mw_s < 0 < self.ramp_up_mw_s):
            raise ValueError(
                f"generator {self.id}: need ramp_down < 0 < ramp_up")
        if not (self.p_min_mw <= self.initial_mw <= self.p_max_mw):
            raise ValueError(f"generator {self.id}: initial power outside box")


@dataclass(frozen=True)
class StorageSpec:
    """Storage unit; p_max_mw is the discharge limit, p_min_mw = -charge limit."""

    id: str
    kind: StorageClass
    p_min_mw: float
    p_max_mw: float
    ramp_down_mw_s: float
    ramp_up_mw_s: float
    capacity_mj: float
    soc_min: float = DEFAULT_SOC_MIN
    soc_max: float = DEFAULT_SOC_MAX
    initial_soc: float = 0.5
    terminal_priority: Optional[float] = None
    initial_mw: float = 0.0
    name: str = ""

    def __post_init__(self):
        if not (self.p_min_mw < 0 < self.p_max_mw):
            raise ValueError(f"storage {self.id}: need p_min < 0 < p_max")
        if not (self.ramp_down_mw_s < 0 < self.ramp_up_mw_s):
            raise ValueError(f"storage {self.id}: need ramp_down < 0 < ramp_up")
        if not self.capacity_mj > 0:
            raise ValueError(f"storage {self.id}: capacity_mj must be > 0")
        if not (0 <= self.soc_min < self.soc_max <= 1):
            raise ValueError(f"storage {self.id}: need 0 <= soc_min < soc_max <= 1")
        if not (self.soc_min <= self.initial_soc <= self.soc_max):
            raise ValueError(f"storage {self.id}: initial_soc outside SoC box")
        if self.terminal_priority is None:
            object.__setattr__(self, "terminal_priority",
                               DEFAULT_TERMINAL_PRIORITY[self.kind])
        if self.terminal_priority < 0:
            raise ValueError(f"storage {self.id}: terminal_priority must be >= 0")


@dataclass(frozen=True)
class ObjectiveWeights:
    """Scalarization weights of the dispatch objective.

    ``throughput`` penalizes total storage power movement,
    ``imbalance`` penalizes pairwise SoC spread, ``terminal`` rewards
    weighted SoC at the end of the optimization window.
    """

    throughput: float = 0.0
    imbalance: float = 0.0
    terminal: float = 0.0

    def __post_init__(self):
        vals = (self.throughput, self.imbalance, self.terminal)
        if not all(np.isfinite(v) and v >= 0 for v in vals):
            raise ValueError("objective weights must be finite and >= 0")

    def as_array(self) -> np.ndarray:
        return np.array([self.throughput, self.imbalance, self.terminal])


@dataclass(frozen=True)
class ObjectiveTerms:
    """The four raw objective terms of a plan or mission.

    served          weighted load service        sum_t sum_i w_hat_i * o_i^t
    throughput      storage power movement       sum_t sum_e |P_e^t|
    imbalance       pairwise SoC spread          sum_t sum_{l<m} |SoC_l - SoC_m|
    terminal_soc    priority-weighted final SoC  sum_e alpha_e * SoC_e(end)
    """

    served: float
    throughput: float
    imbalance: float
    terminal_soc: float

    def combined(self, weights: ObjectiveWeights) -> float:
        return (self.served
                - weights.throughput * self.throughput
                - weights.imbalance * self.imbalance
                + weights.terminal * self.terminal_soc)

    def as_tuple(self):
        return (self.served, self.throughput, self.imbalance, self.terminal_soc)


@dataclass(frozen=True)
class ScenarioSpec:
    """A full mission: fleet, per-step demand, weights and trip events.

    ``demand_mw`` is (n_loads, steps).  ``generator_available`` is an
    optional (n_generators, steps) boolean matrix; a False entry trips
    the unit for that step (its power is forced to zero).  The
    commanded service level is 1 for every load at every step.
    """

    dt_s: float
    loads: tuple
    generators: tuple
    storage: tuple
    demand_mw: np.ndarray
    generator_available: Optional[np.ndarray] = None
    weight_override: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "loads", tuple(self.loads))
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "storage", tuple(self.storage))
        demand = np.asarray(self.demand_mw, dtype=np.float64)
        object.__setattr__(self, "demand_mw", demand)
        if self.dt_s <= 0:
            raise ValueError("dt_s must be > 0")
        if demand.ndim != 2 or demand.shape[0] != len(self.loads):
            raise ValueError(
                f"demand matrix is {demand.shape}, expected "
                f"({len(self.loads)}, steps)")
        if demand.shape[1] < 1:
            raise ValueError("mission must have at least one step")
        if np.any(demand < 0) or not np.all(np.isfinite(demand)):
            raise ValueError("demand entries must be finite and >= 0")
        if self.generator_available is not None:
            avail = np.asarray(self.generator_available, dtype=bool)
            if avail.shape != (len(self.generators), demand.shape[1]):
                raise ValueError(
                    f"generator availability is {avail.shape}, expected "
                    f"({len(self.generators)}, {demand.shape[1]})")
            object.__setattr__(self, "generator_available", avail)
        if self.weight_override is not None:
            wo = np.asarray(self.weight_override, dtype=np.float64)
            if wo.shape != (len(self.loads),):
                raise ValueError("weight_override must have one entry per load")
            if np.any(wo < 0) or not np.all(np.isfinite(wo)):
                raise ValueError("weight_override entries must be finite and >= 0")
            object.__setattr__(self, "weight_override", wo)
        ids = [u.id for u in self.loads] + [u.id for u in self.generators] \
            + [u.id for u in self.storage]
        if len(set(ids)) != len(ids):
            raise ValueError("unit ids must be unique across the scenario")

    @property
    def steps(self) -> int:
        return self.demand_mw.shape[1]

    @property
    def n_loads(self) -> int:
        return len(self.loads)

    @property
    def n_generators(self) -> int:
        return len(self.generators)

    @property
    def n_storage(self) -> int:
        return len(self.storage)

    def effective_load_weights(self) -> np.ndarray:
        """Per-load weights after any scenario override."""
        if self.weight_override is not None:
            return self.weight_override.copy()
        return np.array([ld.weight for ld in self.loads])

    def normalized_weights(self) -> np.ndarray:
        """w_hat per load: weight times rated power."""
        w = self.effective_load_weights()
        return np.array([normalized_weight(ld, wi)
                         for ld, wi in zip(self.loads, w)])

    def availability(self) -> np.ndarray:
        if self.generator_available is not None:
            return self.generator_available
        return np.ones((self.n_generators, self.steps), dtype=bool)

    def storage_pairs(self) -> list:
        """Unordered (l, m) index pairs across all storage units."""
        n = self.n_storage
        return [(l, m) for l in range(n) for m in range(l + 1, n)]

    def initial_state(self) -> "SystemState":
        return SystemState(
            soc=np.array([s.initial_soc for s in self.storage]),
            prev_storage_power=np.array([s.initial_mw for s in self.storage]),
            prev_generator_power=np.array([g.initial_mw for g in self.generators]),
            step_index=0,
        )


@dataclass
class SystemState:
    """Plant state fed into a window build: SoC plus previous powers."""

    soc: np.ndarray
    prev_storage_power: np.ndarray
    prev_generator_power: np.ndarray
    step_index: int = 0

    def copy(self) -> "SystemState":
        return SystemState(self.soc.copy(), self.prev_storage_power.copy(),
                           self.prev_generator_power.copy(), self.step_index)


@dataclass(frozen=True)
class DispatchPlan:
    """Decoded per-step decision trajectory over one window.

    ``load_fraction`` holds decoded service fractions in [0, 1] (stepped
    loads already multiplied back by their step size).  ``soc`` is the
    end-of-step state of charge per storage unit.
    """

    start_step: int
    load_fraction: np.ndarray      # (n_loads, horizon)
    gen_power: np.ndarray          # (n_generators, horizon)
    storage_power: np.ndarray      # (n_storage, horizon)
    soc: np.ndarray                # (n_storage, horizon)
    terms: ObjectiveTerms
    objective: float

    @property
    def horizon(self) -> int:
        return self.load_fraction.shape[1]


def normalized_weight(load: LoadSpec, scenario_weight: float) -> float:
    """Weight-per-unit-service of a load: w_hat = w * rated power."""
    if not (np.isfinite(scenario_weight) and scenario_weight >= 0):
        raise ValueError("scenario weight must be finite and >= 0")
    return scenario_weight * load.rated_mw


def scale_stepped_load(w_hat: float, demand_mw: float, step_size: float):
    """Rescale a stepped load for integer modeling.

    The service variable of a stepped load runs over integers
    0..1/step_size, so its weight and demand are multiplied by the step
    size; the decoded fraction is the integer times ``step_size``.
    Returns (scaled weight, scaled demand, integer upper bound).
    """
    if not 0.0 < step_size <= 1.0:
        raise ValueError("step_size must lie in (0, 1]")
    n = 1.0 / step_size
    if abs(n - round(n)) > 1e-9:
        raise ValueError("step_size must be the reciprocal of a positive integer")
    return w_hat * step_size, demand_mw * step_size, int(round(n))


def decode_stepped(value: float, step_size: float) -> float:
    """Integer service level back to a served fraction."""
    return value * step_size


def soc_step(soc, power_mw, dt_s: float, capacity_mj: float):
    """One-step SoC kinematics: discharge (positive power) lowers SoC.

    Pure map; box enforcement lives in the window constraints, not here.
    Works elementwise on arrays.
    """
    if np.any(np.asarray(capacity_mj) <= 0):
        raise ValueError("capacity_mj must be > 0")
    return soc - (dt_s * power_mw) / capacity_mj
