"""Surface-code compilation of (Toffoli count, logical qubits) into physical resources.

The model has three parts: a logical failure rate per qubit per cycle, a
two-level CCZ factory (footprint, period, output error), and a layout with a
routing overhead on the data block. Factory constants live in a versioned
calibration file fitted to published anchor configurations.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from typing import Iterable

import numpy as np

__all__ = [
    "CALIBRATION_ANCHORS",
    "PhysicalAssumptions",
    "SurfaceError",
    "SurfaceModel",
    "SurfacePlan",
    "calibrate_surface_model",
    "compile_config",
    "factory_model",
    "feasible_plans",
    "load_surface_model",
    "logical_failure_rate",
    "search_optimal",
]

CALIBRATION_FILE = "surface_calibration.json"
MAX_FAILURE = 0.1
ADVISORY_BELOW = 1e-5
D_DATA_GRID = tuple(range(3, 52, 2))
D1_GRID = tuple(range(7, 26, 2))
D2_GRID = tuple(range(15, 42, 2))

# (p_gate, factories, logical qubits, toffolis, runtime hours, physical qubits or None)
CALIBRATION_ANCHORS = (
    (1e-3, 4, 1434, 7.8e9, 73.0, 4_624_440),
    (1e-3, 2, 1434, 7.8e9, 135.0, 4_900_000),
    (1e-5, 4, 1434, 7.8e9, 25.0, 500_000),
)


class SurfaceError(ValueError):
    pass


@dataclass(frozen=True)
class PhysicalAssumptions:
    p_gate: float = 1e-3
    cycle_time_us: float = 1.0
    reaction_time_us: float = 10.0
    n_factories: int = 4

    def __post_init__(self):
        if not 0 < self.p_gate < 0.5:
            raise ValueError("p_gate must lie in (0, 0.5)")
        if self.cycle_time_us <= 0 or self.reaction_time_us <= 0:
            raise ValueError("cycle and reaction times must be positive")
        if self.n_factories < 1:
            raise ValueError("need at least one factory")


@dataclass(frozen=True)
class SurfaceModel:
    """Coefficients of the logical-error, factory and layout model.

    Factory output error per CCZ is ``28 p1^2 + level2_error_volume * pL(d2)``
    with ``p1 = 35 p^3 + level1_error_volume * pL(d1)`` the level-1 T error.
    Footprint is ``qubits_per_patch * (level1_patches d1^2 + level2_patches d2^2)``
    and the CCZ period is ``period_per_distance * d2`` cycles.
    """

    prefactor: float = 0.1
    threshold: float = 0.01
    routing_overhead: float = 1.5
    qubits_per_patch: float = 2.0
    level1_patches: float = 88.0
    level2_patches: float = 97.8
    period_per_distance: float = 4.0
    level1_error_volume: float = 1.4e4
    level2_error_volume: float = 3.0e5
    version: str = "uncalibrated"
    anchor_residuals: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return asdict(self)


def load_surface_model() -> SurfaceModel:
    text = resources.files("estimator").joinpath("data", CALIBRATION_FILE).read_text()
    data = json.loads(text)
    return SurfaceModel(**data["model"])


def logical_failure_rate(p_gate: float, d: int, model: SurfaceModel | None = None) -> float:
    """Failure probability per logical qubit per code cycle at distance ``d``."""
    model = model or SurfaceModel()
    if p_gate >= model.threshold:
        raise SurfaceError(f"p_gate={p_gate} is not below the threshold {model.threshold}")
    return model.prefactor * (p_gate / model.threshold) ** ((d + 1) / 2)


def factory_model(d1: int, d2: int, p_gate: float, model: SurfaceModel | None = None) -> tuple[float, float, float]:
    """(footprint in physical qubits, period in cycles per CCZ, failure per CCZ)."""
    model = model or load_surface_model()
    if d1 % 2 == 0 or d2 % 2 == 0:
        raise SurfaceError("factory distances must be odd")
    footprint = model.qubits_per_patch * (model.level1_patches * d1**2 + model.level2_patches * d2**2)
    period = model.period_per_distance * d2
    p1 = 35.0 * p_gate**3 + model.level1_error_volume * logical_failure_rate(p_gate, d1, model)
    p_ccz = 28.0 * p1**2 + model.level2_error_volume * logical_failure_rate(p_gate, d2, model)
    return footprint, period, min(p_ccz, 1.0)


@dataclass(frozen=True)
class SurfacePlan:
    d_data: int
    d1: int
    d2: int
    n_factories: int
    logical_qubits: int
    toffoli_count: float
    data_block_qubits: float
    factory_qubits: float
    physical_qubits: int
    cycles: float
    runtime_hours: float
    p_fail_data: float
    p_fail_factory: float
    p_fail_total: float
    advisory: bool = False
    assumptions: PhysicalAssumptions = field(default_factory=PhysicalAssumptions)

    @property
    def spacetime_volume(self) -> float:
        return self.physical_qubits * self.runtime_hours

    @property
    def feasible(self) -> bool:
        return self.p_fail_total <= MAX_FAILURE

    def to_dict(self) -> dict:
        d = asdict(self)
        d["spacetime_volume"] = self.spacetime_volume
        return d


def _as_counts(logical) -> tuple[int, float]:
    if isinstance(logical, tuple):
        return int(logical[0]), float(logical[1])
    return int(logical.logical_qubits), float(logical.toffoli_count)


def compile_config(
    logical,
    phys: PhysicalAssumptions,
    d_data: int,
    d1: int,
    d2: int,
    model: SurfaceModel | None = None,
) -> SurfacePlan:
    """Physical cost of one configuration.

    ``logical`` is a :class:`~estimator.logical_cost.LogicalCost` or a
    ``(logical_qubits, toffoli_count)`` pair. Runtime is factory-limited.
    """
    model = model or load_surface_model()
    if d_data < 3 or d_data % 2 == 0:
        raise SurfaceError("data code distance must be odd and >= 3")
    n_logical, toffolis = _as_counts(logical)
    footprint, period, p_ccz = factory_model(d1, d2, phys.p_gate, model)
    data_block = model.routing_overhead * n_logical * model.qubits_per_patch * d_data**2
    factories = phys.n_factories * footprint
    cycles = toffolis / phys.n_factories * period
    p_l = logical_failure_rate(phys.p_gate, d_data, model)
    log_ok_data = n_logical * cycles * math.log1p(-p_l)
    log_ok_fact = toffolis * math.log1p(-p_ccz) if p_ccz < 1 else -math.inf
    return SurfacePlan(
        d_data=d_data,
        d1=d1,
        d2=d2,
        n_factories=phys.n_factories,
        logical_qubits=n_logical,
        toffoli_count=toffolis,
        data_block_qubits=data_block,
        factory_qubits=factories,
        physical_qubits=int(round(data_block + factories)),
        cycles=cycles,
        runtime_hours=cycles * phys.cycle_time_us / 3.6e9,
        p_fail_data=-math.expm1(log_ok_data),
        p_fail_factory=-math.expm1(log_ok_fact),
        p_fail_total=-math.expm1(log_ok_data + log_ok_fact),
        advisory=phys.p_gate < ADVISORY_BELOW,
        assumptions=phys,
    )


def feasible_plans(
    logical,
    phys: PhysicalAssumptions,
    model: SurfaceModel | None = None,
    d_data_grid: Iterable[int] = D_DATA_GRID,
    d1_grid: Iterable[int] = D1_GRID,
    d2_grid: Iterable[int] = D2_GRID,
) -> list[SurfacePlan]:
    model = model or load_surface_model()
    plans = []
    for d in d_data_grid:
        for d2 in d2_grid:
            for d1 in d1_grid:
                plan = compile_config(logical, phys, d, d1, d2, model)
                if plan.feasible:
                    plans.append(plan)
    return plans


def search_optimal(logical, phys: PhysicalAssumptions, model: SurfaceModel | None = None, **grids) -> SurfacePlan:
    """Feasible configuration of least spacetime volume.

    Ties go to the smaller data distance, then smaller level-2, then level-1 distance.
    """
    plans = feasible_plans(logical, phys, model, **grids)
    if not plans:
        raise SurfaceError("no configuration on the grid keeps the failure probability <= 0.1")
    return min(plans, key=lambda p: (p.spacetime_volume, p.d_data, p.d2, p.d1))


def calibrate_surface_model(base: SurfaceModel | None = None, anchors=CALIBRATION_ANCHORS,
                            iterations: int = 10) -> SurfaceModel:
    """Fit the CCZ period and level-2 patch count to the anchor configurations.

    The period coefficient is the log-space least-squares fit to all runtime
    anchors; the level-2 patch count reproduces the first anchor's qubit count.
    Both depend on the distances the search selects, so the fit is iterated to
    a fixed point.
    """
    model = base or SurfaceModel()
    for _ in range(iterations):
        logs = []
        plans = []
        for p, nf, nq, tof, hours, _qubits in anchors:
            plan = search_optimal((nq, tof), PhysicalAssumptions(p_gate=p, n_factories=nf), model)
            plans.append(plan)
            cycles_per_ccz = hours * 3.6e9 / (tof / nf)
            logs.append(math.log(cycles_per_ccz / plan.d2))
        kappa = math.exp(float(np.mean(logs)))
        p, nf, nq, tof, _hours, qubits = anchors[0]
        plan = plans[0]
        factory_target = (qubits - plan.data_block_qubits) / nf
        l2 = (factory_target / model.qubits_per_patch - model.level1_patches * plan.d1**2) / plan.d2**2
        new = replace(model, period_per_distance=kappa, level2_patches=l2)
        if new == model:
            break
        model = new
    residuals = {}
    for k, (p, nf, nq, tof, hours, qubits) in enumerate(anchors):
        plan = search_optimal((nq, tof), PhysicalAssumptions(p_gate=p, n_factories=nf), model)
        entry = {"distances": [plan.d1, plan.d2, plan.d_data],
                 "runtime_rel": plan.runtime_hours / hours - 1.0}
        if qubits:
            entry["qubits_rel"] = plan.physical_qubits / qubits - 1.0
        residuals[f"p={p:g},factories={nf}"] = entry
    return replace(model, anchor_residuals=residuals)
