"""Logical resource model for qubitized phase estimation.

Iteration counts follow ``ceil(pi * lambda / (2 * eps))``. Per-step Toffoli costs
and logical-qubit counts come from calibrated laws fitted to a published THC
rank sweep; every estimate carries the provenance of its calibration.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from typing import Sequence

import numpy as np

__all__ = [
    "CalibrationError",
    "ErrorBudget",
    "LogicalCost",
    "PowerLawFit",
    "QubitModel",
    "StepCostModel",
    "calibration_table",
    "default_qubit_model",
    "default_step_model",
    "estimate_logical_cost",
    "extrapolate_cost",
    "fit_power_law",
    "fit_sqrt_gamma",
    "fit_step_cost",
    "logical_qubit_count",
    "pea_iterations",
    "synthetic_gamma",
    "toffoli_count",
]

CALIBRATION_FILE = "table3_cpd1_x.json"


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class ErrorBudget:
    """Separate allowances; errors from these sources add."""

    eps_pea: float = 1.0e-3
    eps_trunc: float = 1.0e-3
    eps_rot: float = 1.0e-3

    def __post_init__(self):
        if min(self.eps_pea, self.eps_trunc, self.eps_rot) <= 0:
            raise ValueError("error budget components must be positive")

    @property
    def total(self) -> float:
        return self.eps_pea + self.eps_trunc


def pea_iterations(lam: float, eps_pea: float) -> int:
    """Walk-operator applications for phase estimation to precision ``eps_pea``."""
    if lam <= 0 or eps_pea <= 0:
        raise ValueError("lambda and eps_pea must be positive")
    return max(1, math.ceil(math.pi * lam / (2.0 * eps_pea)))


def calibration_table() -> dict:
    """The shipped THC rank sweep used for calibration."""
    text = resources.files("estimator").joinpath("data", CALIBRATION_FILE).read_text()
    return json.loads(text)


# -- step cost ---------------------------------------------------------------


@dataclass(frozen=True)
class StepCostModel:
    """Per-step Toffoli cost ``slope * x + intercept``.

    ``x`` is the THC rank for ``kind="affine_rank"`` and ``sqrt(Gamma)`` for
    ``kind="sqrt_gamma"``.
    """

    slope: float
    intercept: float
    kind: str = "affine_rank"
    domain: tuple[float, float] = (0.0, math.inf)
    max_relative_residual: float = 0.0
    provenance: dict = field(default_factory=dict)

    def step_cost(self, x: float) -> float:
        return self.slope * x + self.intercept

    def extrapolating(self, x: float) -> bool:
        return not (self.domain[0] <= x <= self.domain[1])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["domain"] = list(self.domain)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "StepCostModel":
        d = dict(d)
        d["domain"] = tuple(d.get("domain", (0.0, math.inf)))
        return cls(**d)


def _affine_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    if len(x) < 2 or np.ptp(x) == 0:
        raise CalibrationError("need at least two distinct abscissae to fit a line")
    design = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = np.max(np.abs(design @ [slope, intercept] - y) / np.abs(y))
    return float(slope), float(intercept), float(resid)


def fit_step_cost(
    rows: Sequence[tuple[float, float, float]], eps_pea: float = 1.0e-3, source: str = "user"
) -> StepCostModel:
    """Fit ``C(M) = alpha*M + beta`` to (rank, lambda, total Toffoli count) rows.

    Each row's per-step cost is its Toffoli count divided by the iteration count
    implied by its lambda at ``eps_pea``.
    """
    rows = [tuple(map(float, r)) for r in rows]
    if len(rows) < 2:
        raise CalibrationError("need at least two calibration rows")
    ranks = np.array([r[0] for r in rows])
    per_step = np.array([r[2] / pea_iterations(r[1], eps_pea) for r in rows])
    slope, intercept, resid = _affine_fit(ranks, per_step)
    return StepCostModel(
        slope, intercept, "affine_rank", (float(ranks.min()), float(ranks.max())), resid,
        {"source": source, "eps_pea": eps_pea, "n_rows": len(rows)},
    )


def fit_sqrt_gamma(gammas: Sequence[float], step_costs: Sequence[float], source: str = "user") -> StepCostModel:
    """Fit the generic ``a*sqrt(Gamma) + b`` per-step law."""
    x = np.sqrt(np.asarray(gammas, dtype=float))
    slope, intercept, resid = _affine_fit(x, np.asarray(step_costs, dtype=float))
    return StepCostModel(slope, intercept, "sqrt_gamma", (float(x.min()), float(x.max())), resid,
                         {"source": source, "n_rows": len(x)})


def default_step_model(kind: str = "affine_rank") -> StepCostModel:
    """Step-cost law calibrated on the shipped THC sweep.

    With ``Gamma = M^2`` for THC, the affine-in-rank law is also the generic
    ``sqrt(Gamma)`` law, which is reused for SF and DF.
    """
    table = calibration_table()
    rows = [(r[0], r[3], r[4] * 1e9) for r in table["rows"]]
    model = fit_step_cost(rows, table["eps_pea"], source=f"{table['name']} v{table['version']}")
    if kind == "affine_rank":
        return model
    if kind == "sqrt_gamma":
        return StepCostModel(model.slope, model.intercept, "sqrt_gamma", model.domain,
                             model.max_relative_residual, model.provenance)
    raise ValueError(f"unknown step model kind {kind!r}")


def toffoli_count(model: StepCostModel, lam: float, eps_pea: float, x: float) -> int:
    """``iterations(lambda, eps) * round(C_step(x))``; ``x`` is the rank or sqrt(Gamma)."""
    step = model.step_cost(x)
    if step <= 0:
        raise CalibrationError(f"step-cost model predicts non-positive cost {step:.3g} at {x}")
    return pea_iterations(lam, eps_pea) * max(1, round(step))


# -- logical qubits ----------------------------------------------------------


@dataclass(frozen=True)
class QubitModel:
    """``2N`` system qubits plus an ancilla count that steps up with the rank.

    ``breakpoints`` are ``(rank, ancilla)`` pairs; the plateau of the last
    breakpoint at or below the rank applies (the first below the grid).
    """

    breakpoints: tuple[tuple[int, int], ...]
    provenance: dict = field(default_factory=dict)

    def ancilla(self, rank: int) -> int:
        if not self.breakpoints:
            raise CalibrationError("qubit model has no calibration points")
        value = self.breakpoints[0][1]
        for m, a in self.breakpoints:
            if m <= rank:
                value = a
        return value


def default_qubit_model() -> QubitModel:
    table = calibration_table()
    n = table["n_orbitals"]
    points: list[tuple[int, int]] = []
    for row in table["rows"]:
        rank, qubits = int(row[0]), int(row[5])
        anc = qubits - 2 * n
        if not points or anc != points[-1][1]:
            if points and anc < points[-1][1]:
                raise CalibrationError("calibration plateaus must be non-decreasing")
            points.append((rank, anc))
    return QubitModel(tuple(points), {"source": f"{table['name']} v{table['version']}",
                                      "n_orbitals": n})


def logical_qubit_count(n_orbitals: int, rank: int, model: QubitModel | None = None) -> int:
    model = model or default_qubit_model()
    return 2 * n_orbitals + model.ancilla(rank)


# -- combined estimate -------------------------------------------------------


@dataclass(frozen=True)
class LogicalCost:
    iterations: int
    step_cost: int
    toffoli_count: int
    logical_qubits: int
    method: str
    lambda_total: float
    n_orbitals: int
    rank: int
    budget: ErrorBudget
    extrapolated: bool = False
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.iterations < 1 or self.toffoli_count != self.iterations * self.step_cost:
            raise ValueError("toffoli_count must equal iterations * step_cost")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["budget"] = asdict(self.budget)
        return d


def synthetic_gamma(method: str, n_orbitals: int, rank: int | None = None, xi: float | None = None) -> float:
    """Information content of a factorization with the usual size assumptions.

    SF: ``N^2 L``; DF: ``N * L * Xi``; THC: ``M^2``. Unless given, ``L`` and ``M``
    default to ``5N`` and ``Xi`` to ``N/2``.
    """
    n = n_orbitals
    rank = 5 * n if rank is None else rank
    if method == "sf":
        return float(n * n * rank)
    if method == "df":
        xi = n / 2 if xi is None else xi
        return float(n * rank * xi)
    if method == "thc":
        return float(rank * rank)
    raise ValueError(f"unknown method {method!r}")


def estimate_logical_cost(
    lam: float,
    n_orbitals: int,
    rank: int,
    method: str = "thc",
    budget: ErrorBudget | None = None,
    step_model: StepCostModel | None = None,
    qubit_model: QubitModel | None = None,
    gamma: float | None = None,
) -> LogicalCost:
    """Iterations, Toffolis and logical qubits for one factorized Hamiltonian.

    THC uses the affine-in-rank law; SF/DF evaluate the sqrt(Gamma) law at the
    supplied (or synthetic) ``gamma``.
    """
    budget = budget or ErrorBudget()
    qubit_model = qubit_model or default_qubit_model()
    if method == "thc":
        step_model = step_model or default_step_model("affine_rank")
        x = float(rank) if step_model.kind == "affine_rank" else math.sqrt(gamma or rank**2)
    else:
        step_model = step_model or default_step_model("sqrt_gamma")
        x = math.sqrt(gamma if gamma is not None else synthetic_gamma(method, n_orbitals, rank))
    iters = pea_iterations(lam, budget.eps_pea)
    step = model_step = step_model.step_cost(x)
    if step <= 0:
        raise CalibrationError(f"step-cost model predicts non-positive cost {step:.3g}")
    step = max(1, round(model_step))
    return LogicalCost(
        iterations=iters,
        step_cost=step,
        toffoli_count=iters * step,
        logical_qubits=logical_qubit_count(n_orbitals, rank, qubit_model),
        method=method,
        lambda_total=float(lam),
        n_orbitals=n_orbitals,
        rank=rank,
        budget=budget,
        extrapolated=step_model.extrapolating(x),
        provenance={"step_model": step_model.to_dict(), "qubit_model": dict(qubit_model.provenance),
                    "defaults_flagged": ["eps_pea", "eps_trunc", "eps_rot"]},
    )


# -- power-law extrapolation -------------------------------------------------


@dataclass(frozen=True)
class PowerLawFit:
    """``y = prefactor * x**exponent`` fitted on log-log axes."""

    prefactor: float
    exponent: float
    x_min: float
    x_max: float
    max_log_residual: float

    def __call__(self, x: float) -> float:
        return self.prefactor * x**self.exponent


def fit_power_law(xs: Sequence[float], ys: Sequence[float]) -> PowerLawFit:
    x, y = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if len(x) < 2 or np.any(x <= 0) or np.any(y <= 0):
        raise CalibrationError("power-law fit needs >= 2 strictly positive points")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(lx) == 0:
        raise CalibrationError("power-law fit needs distinct abscissae")
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = float(np.max(np.abs(slope * lx + intercept - ly)))
    return PowerLawFit(float(np.exp(intercept)), float(slope), float(x.min()), float(x.max()), resid)


def extrapolate_cost(toffoli_fit: PowerLawFit, qubit_fit: PowerLawFit, n_target: float) -> tuple[float, float]:
    """Extrapolated (Toffoli count, logical qubits) at ``n_target`` orbitals."""
    if n_target < min(toffoli_fit.x_min, qubit_fit.x_min):
        raise CalibrationError(f"target {n_target} lies below the fitted range")
    return toffoli_fit(n_target), qubit_fit(n_target)
