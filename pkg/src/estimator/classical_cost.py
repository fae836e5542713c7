"""DMRG cost scaling and discarded-weight energy extrapolation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from typing import Sequence

import numpy as np

__all__ = [
    "DMRGCostPoint",
    "ExtrapolationResult",
    "dmrg_extrapolate_energy",
    "dmrg_scale",
    "fit_dmrg_walltime",
]


@dataclass(frozen=True)
class DMRGCostPoint:
    """Resources of one DMRG run; ``threads`` converts CPU-hours to wall-clock."""

    k: int
    bond_dimension: int
    cpu_hours: float
    memory_gb: float
    disk_gb: float
    threads: int = 1

    def __post_init__(self):
        if self.k < 2 or self.bond_dimension < 1:
            raise ValueError("need k >= 2 orbitals and bond dimension >= 1")
        if min(self.cpu_hours, self.memory_gb, self.disk_gb) <= 0 or self.threads < 1:
            raise ValueError("costs and thread count must be positive")

    @property
    def wall_hours(self) -> float:
        return self.cpu_hours / self.threads

    def to_dict(self) -> dict:
        return asdict(self)


def dmrg_scale(baseline: DMRGCostPoint, k_target: int, m_target: int) -> DMRGCostPoint:
    """Scale CPU as k^3 M^3, memory as k^2 M^2 and disk as k^3 M^2."""
    if k_target <= 0 or m_target <= 0:
        raise ValueError("target k and M must be positive")
    rk = k_target / baseline.k
    rm = m_target / baseline.bond_dimension
    return replace(
        baseline,
        k=k_target,
        bond_dimension=m_target,
        cpu_hours=baseline.cpu_hours * rk**3 * rm**3,
        memory_gb=baseline.memory_gb * rk**2 * rm**2,
        disk_gb=baseline.disk_gb * rk**3 * rm**2,
    )


def fit_dmrg_walltime(points: Sequence[tuple[float, float]]) -> float:
    """Least-squares slope of log(cpu_hours) against log(k)."""
    if len(points) < 3:
        raise ValueError("need at least three (k, cpu_hours) points")
    k, t = np.asarray(points, dtype=float).T
    slope, _ = np.polyfit(np.log(k), np.log(t), 1)
    return float(slope)


@dataclass(frozen=True)
class ExtrapolationResult:
    energy: float
    error_estimate: float
    slope: float
    points: tuple[tuple[float, float], ...]


def dmrg_extrapolate_energy(points: Sequence[tuple[float, float]]) -> ExtrapolationResult:
    """Linear extrapolation of energy to zero discarded weight.

    The error estimate is one fifth of the gap between the extrapolated energy
    and the fitted energy of the most converged (smallest-weight) calculation.
    """
    pts = tuple((float(w), float(e)) for w, e in points)
    if len(pts) < 2:
        raise ValueError("need at least two (discarded weight, energy) points")
    w = np.array([p[0] for p in pts])
    e = np.array([p[1] for p in pts])
    if np.any(w < 0):
        raise ValueError("discarded weights must be non-negative")
    if len(np.unique(w)) != len(w):
        raise ValueError("discarded weights must be distinct")
    design = np.column_stack([np.ones_like(w), w])
    (intercept, slope), *_ = np.linalg.lstsq(design, e, rcond=None)
    w_best = w.min()
    err = abs((intercept + slope * w_best) - intercept) / 5.0
    return ExtrapolationResult(float(intercept), float(err), float(slope), pts)
