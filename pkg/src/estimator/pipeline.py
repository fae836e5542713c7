"""End-to-end orchestration: factorize -> lambda -> logical cost -> surface plan, plus crossover tables."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import platform
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

from . import __version__
from .classical_cost import DMRGCostPoint
from .factorize import (
    DEFAULT_CHOLESKY_THRESHOLD,
    cholesky_sf,
    cp3_init,
    double_factorize,
    factorization_error,
    save_factors,
    suggest_thc_rank,
    thc_optimize,
)
from .integrals import Hamiltonian, load_hamiltonian, read_fcidump
from .logical_cost import ErrorBudget, calibration_table, estimate_logical_cost, fit_power_law
from .norms import compute_lambda
from .surface import PhysicalAssumptions, load_surface_model, search_optimal

logger = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "CrossoverRow",
    "CrossoverTable",
    "RunConfig",
    "crossover_table",
    "emit_plot_data",
    "load_config",
    "read_crossover_csv",
    "run_pipeline",
]

METHODS = ("sf", "df", "thc")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    systems: tuple[str, ...]
    methods: tuple[str, ...] = ("thc",)
    ranks: dict = field(default_factory=dict)
    cholesky_threshold: float = DEFAULT_CHOLESKY_THRESHOLD
    eig_threshold: float = 1e-4
    thc_sweeps: int = 500
    thc_max_iter: int = 2000
    eps_pea: float = 1.0e-3
    eps_trunc: float = 1.0e-3
    eps_rot: float = 1.0e-3
    p_gate: float = 1e-3
    n_factories: int = 4
    cycle_time_us: float = 1.0
    reaction_time_us: float = 10.0
    seed: int = 0
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "systems", tuple(str(s) for s in self.systems))
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "ranks", {k: tuple(int(r) for r in v) for k, v in dict(self.ranks).items()})
        self.validate()

    def validate(self) -> None:
        if not self.systems:
            raise ConfigError("no systems configured")
        if not self.methods:
            raise ConfigError("method list is empty")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}")
        for method, grid in self.ranks.items():
            if method not in METHODS:
                raise ConfigError(f"ranks given for unknown method {method!r}")
            if any(r < 1 for r in grid) or list(grid) != sorted(set(grid)):
                raise ConfigError(f"rank grid for {method} must be positive, ascending, unique")
        if min(self.eps_pea, self.eps_trunc, self.eps_rot, self.cholesky_threshold) <= 0:
            raise ConfigError("error budgets and thresholds must be positive")
        if not 0 < self.p_gate < 0.01:
            raise ConfigError("p_gate must lie below the 1% surface-code threshold")
        if self.n_factories < 1 or self.workers < 1 or self.thc_sweeps < 1 or self.thc_max_iter < 1:
            raise ConfigError("factories, workers and iteration counts must be >= 1")
        if self.eig_threshold < 0:
            raise ConfigError("eig_threshold must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["systems"] = list(self.systems)
        d["methods"] = list(self.methods)
        d["ranks"] = {k: list(v) for k, v in sorted(self.ranks.items())}
        return d

    def config_hash(self) -> str:
        payload = {k: v for k, v in self.to_dict().items() if k not in ("out", "workers")}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        extra = set(data) - names
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path: str | Path, **overrides) -> RunConfig:
    """Read a TOML run configuration; non-None ``overrides`` replace file values."""
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as f:
        try:
            data = tomllib.load(f)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(data)


# -- pipeline ----------------------------------------------------------------


def _load_system(path: str) -> Hamiltonian:
    p = Path(path)
    with open(p, "rb") as f:
        magic = f.read(8)
    return load_hamiltonian(p) if magic == b"ESTHAM01" else read_fcidump(p)


def _factorize(ham: Hamiltonian, method: str, rank: int | None, cfg: RunConfig):
    if method == "sf":
        return cholesky_sf(ham, threshold=cfg.cholesky_threshold, rank=rank)
    if method == "df":
        sf = cholesky_sf(ham, threshold=cfg.cholesky_threshold, rank=rank)
        return double_factorize(sf, cfg.eig_threshold)
    sf = cholesky_sf(ham, threshold=cfg.cholesky_threshold)
    _, init = cp3_init(sf, rank, sweeps=cfg.thc_sweeps, seed=cfg.seed)
    return thc_optimize(ham, init, max_iter=cfg.thc_max_iter)


def _cells(cfg: RunConfig, hams: dict[int, Hamiltonian]) -> list[tuple[int, str, int | None]]:
    cells = []
    for s, ham in sorted(hams.items()):
        for method in cfg.methods:
            grid = cfg.ranks.get(method)
            if not grid:
                grid = (suggest_thc_rank(ham.n_orbitals),) if method == "thc" else (None,)
            cells.extend((s, method, r) for r in grid)
    return cells


def _run_cell(cfg: RunConfig, index: int, ham: Hamiltonian, method: str, rank: int | None,
              out: Path | None) -> dict:
    label = f"s{index}_{method}_{'auto' if rank is None else rank}"
    report: dict = {"system": cfg.systems[index], "method": method, "rank": rank, "cell": label}
    try:
        factors = _factorize(ham, method, rank, cfg)
        lam = compute_lambda(ham, factors)
        budget = ErrorBudget(cfg.eps_pea, cfg.eps_trunc, cfg.eps_rot)
        cost = estimate_logical_cost(lam.lambda_total, ham.n_orbitals, factors.rank, method,
                                     budget, gamma=float(factors.gamma))
        phys = PhysicalAssumptions(cfg.p_gate, cfg.cycle_time_us, cfg.reaction_time_us, cfg.n_factories)
        plan = search_optimal(cost, phys)
        factor_section = {
            "rank": factors.rank,
            "gamma": factors.gamma,
            "eri_error": factorization_error(ham, factors),
        }
        if method == "df":
            factor_section["average_rank"] = factors.average_rank
        if method == "thc":
            factor_section.update(regularizer=factors.regularizer, converged=factors.converged,
                                  seed=factors.seed)
        if out is not None:
            archive = save_factors(factors, out / "cells" / label / "factors")
            factor_section["archive"] = str(archive.relative_to(out))
        report.update(
            status="ok",
            hamiltonian={"n_orbitals": ham.n_orbitals, "n_alpha": ham.n_alpha,
                         "n_beta": ham.n_beta, "e_core": ham.e_core},
            factorization=factor_section,
            **{"lambda": lam.to_dict()},
            logical_cost=cost.to_dict(),
            surface_plan=plan.to_dict(),
        )
    except Exception as exc:  # one failed cell must not abort the bundle
        logger.warning("cell %s failed: %s", label, exc)
        report.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    return report


def run_pipeline(cfg: RunConfig) -> dict:
    """Run every (system, method, rank) cell and return the report bundle.

    When ``cfg.out`` is set, writes ``bundle.json``, per-cell ``report.json`` and
    factor archives, and a ``provenance.json`` side-file holding timestamps.
    """
    cfg.validate()
    out = Path(cfg.out) if cfg.out else None
    hams: dict[int, Hamiltonian] = {}
    load_errors: dict[int, str] = {}
    for i, path in enumerate(cfg.systems):
        try:
            hams[i] = _load_system(path)
        except Exception as exc:
            load_errors[i] = f"{type(exc).__name__}: {exc}"
    cells = _cells(cfg, hams)

    def work(cell):
        s, method, rank = cell
        return _run_cell(cfg, s, hams[s], method, rank, out)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            reports = list(pool.map(work, cells))
    else:
        reports = [work(c) for c in cells]
    for i, err in sorted(load_errors.items()):
        reports.append({"system": cfg.systems[i], "status": "failed", "error": err})

    bundle = {
        "config": cfg.to_dict() | {"out": None, "workers": None},
        "config_hash": cfg.config_hash(),
        "calibration": {
            "step_cost": f"{calibration_table()['name']} v{calibration_table()['version']}",
            "surface": load_surface_model().version,
        },
        "estimator_version": __version__,
        "cells": reports,
    }
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        for rep in reports:
            if "cell" in rep:
                cell_dir = out / "cells" / rep["cell"]
                cell_dir.mkdir(parents=True, exist_ok=True)
                _write_json(cell_dir / "report.json", rep)
        _write_json(out / "bundle.json", bundle)
        from ._kernels import BACKEND

        _write_json(out / "provenance.json", {
            "created_unix": time.time(),
            "python": platform.python_version(),
            "kernel_backend": BACKEND,
            "config_hash": bundle["config_hash"],
        })
    return bundle


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


# -- crossover ---------------------------------------------------------------


@dataclass(frozen=True)
class CrossoverRow:
    n_orbitals: int
    method: str
    qpu_hours: float
    dmrg_hours: dict  # bond dimension -> wall hours
    qpu_faster: dict  # bond dimension -> bool


@dataclass(frozen=True)
class CrossoverTable:
    rows: tuple[CrossoverRow, ...]
    bond_dimensions: tuple[int, ...]
    crossover: dict  # bond dimension -> smallest N with QPU faster, or None
    factories: int
    threads: int


def crossover_table(
    qpu_reports: Iterable,
    dmrg_points: Iterable[DMRGCostPoint],
    factories: int = 2,
    threads: int = 1,
) -> CrossoverTable:
    """Wall-clock comparison of phase estimation against DMRG at each bond dimension.

    ``qpu_reports`` are ``(n_orbitals, method, runtime_hours, n_factories)``
    tuples (or dicts with those keys); runtimes are rescaled to ``factories``.
    DMRG CPU-hours are divided by ``threads``. Orbital counts present on only
    one side are dropped with a warning.
    """
    qpu = []
    for rep in qpu_reports:
        if isinstance(rep, dict):
            rep = (rep["n_orbitals"], rep["method"], rep["runtime_hours"], rep.get("n_factories", factories))
        n, method, hours, nf = rep
        if hours <= 0:
            raise ValueError("QPU runtimes must be positive")
        qpu.append((int(n), str(method), float(hours) * nf / factories))
    dmrg: dict[int, dict[int, float]] = {}
    for p in dmrg_points:
        dmrg.setdefault(p.bond_dimension, {})[p.k] = p.cpu_hours / threads
    if not qpu or not dmrg:
        raise ValueError("need at least one QPU report and one DMRG series")

    bonds = tuple(sorted(dmrg))
    common = {n for n, _, _ in qpu}
    for series in dmrg.values():
        common &= set(series)
    dropped = {n for n, _, _ in qpu} | {k for s in dmrg.values() for k in s}
    dropped -= common
    if dropped:
        warnings.warn(f"orbital counts {sorted(dropped)} missing from one side; inner join applied",
                      RuntimeWarning, stacklevel=2)

    rows = []
    for n, method, hours in sorted(q for q in qpu if q[0] in common):
        d_hours = {m: dmrg[m][n] for m in bonds}
        rows.append(CrossoverRow(n, method, hours, d_hours, {m: hours < d_hours[m] for m in bonds}))
    crossover = {}
    for m in bonds:
        hits = [r.n_orbitals for r in rows if r.qpu_faster[m]]
        crossover[m] = min(hits) if hits else None
    return CrossoverTable(tuple(rows), bonds, crossover, factories, threads)


def _csv_header(table: CrossoverTable) -> list[str]:
    return (["n_orbitals", "method", "qpu_hours"]
            + [f"dmrg_hours_m{m}" for m in table.bond_dimensions]
            + [f"qpu_faster_m{m}" for m in table.bond_dimensions])


def _table_json(table: CrossoverTable) -> dict:
    return {
        "kind": "crossover",
        "axes": {"x": {"name": "n_orbitals", "unit": "orbitals", "scale": "log"},
                 "y": {"name": "wall_time", "unit": "hours", "scale": "log"}},
        "factories": table.factories,
        "threads": table.threads,
        "bond_dimensions": list(table.bond_dimensions),
        "crossover": {str(m): n for m, n in table.crossover.items()},
        "rows": [
            {"n_orbitals": r.n_orbitals, "method": r.method, "qpu_hours": r.qpu_hours,
             "dmrg_hours": {str(m): h for m, h in r.dmrg_hours.items()},
             "qpu_faster": {str(m): f for m, f in r.qpu_faster.items()}}
            for r in table.rows
        ],
    }


def _series_json(series: dict[str, Sequence[tuple[float, float]]], y_name: str) -> dict:
    out = {"kind": "scaling", "axes": {"x": {"name": "n_orbitals", "scale": "log"},
                                        "y": {"name": y_name, "scale": "log"}}, "series": {}}
    for method in sorted(series):
        pts = sorted(series[method])
        entry = {"points": [list(p) for p in pts]}
        if len(pts) >= 2:
            fit = fit_power_law([p[0] for p in pts], [p[1] for p in pts])
            entry["fit"] = {"slope": fit.exponent, "prefactor": fit.prefactor,
                            "max_log_residual": fit.max_log_residual}
        out["series"][method] = entry
    return out


def emit_plot_data(obj, fmt: str = "csv", path: str | Path | None = None, y_name: str = "toffoli_count") -> str:
    """Render a :class:`CrossoverTable` or a ``{method: [(N, y), ...]}`` scaling dict.

    Formats are ``"csv"`` (RFC 4180, CRLF line ends) and ``"json"``. The text is
    returned and, if ``path`` is given, written there.
    """
    if fmt not in ("csv", "json"):
        raise ValueError(f"unknown plot-data format {fmt!r}")
    if isinstance(obj, CrossoverTable):
        if fmt == "json":
            text = json.dumps(_table_json(obj), indent=2, sort_keys=True) + "\n"
        else:
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\r\n")
            writer.writerow(_csv_header(obj))
            for r in obj.rows:
                writer.writerow([r.n_orbitals, r.method, repr(r.qpu_hours)]
                                + [repr(r.dmrg_hours[m]) for m in obj.bond_dimensions]
                                + [str(r.qpu_faster[m]).lower() for m in obj.bond_dimensions])
            text = buf.getvalue()
    elif isinstance(obj, dict):
        payload = _series_json(obj, y_name)
        if fmt == "json":
            text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
        else:
            buf = io.StringIO()
            writer = csv.writer(buf, lineterminator="\r\n")
            writer.writerow(["method", "n_orbitals", y_name, "fit_slope"])
            for method, entry in payload["series"].items():
                slope = entry.get("fit", {}).get("slope", "")
                for x, y in entry["points"]:
                    writer.writerow([method, repr(x), repr(y), repr(slope) if slope != "" else ""])
            text = buf.getvalue()
    else:
        raise TypeError(f"cannot emit plot data for {type(obj).__name__}")
    if path is not None:
        Path(path).write_text(text, newline="")
    return text


def read_crossover_csv(text: str, factories: int = 2, threads: int = 1) -> CrossoverTable:
    """Parse CSV produced by :func:`emit_plot_data` back into a table."""
    reader = csv.reader(io.StringIO(text, newline=""))
    header = next(reader)
    bonds = tuple(int(h[len("dmrg_hours_m"):]) for h in header if h.startswith("dmrg_hours_m"))
    rows = []
    for rec in reader:
        if not rec:
            continue
        n, method, qh = int(rec[0]), rec[1], float(rec[2])
        hours = {m: float(v) for m, v in zip(bonds, rec[3:3 + len(bonds)])}
        faster = {m: v == "true" for m, v in zip(bonds, rec[3 + len(bonds):])}
        rows.append(CrossoverRow(n, method, qh, hours, faster))
    crossover = {}
    for m in bonds:
        hits = [r.n_orbitals for r in rows if r.qpu_faster[m]]
        crossover[m] = min(hits) if hits else None
    return CrossoverTable(tuple(rows), bonds, crossover, factories, threads)
