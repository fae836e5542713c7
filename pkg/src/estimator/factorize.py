"""Factorizations of the two-electron tensor: single (pivoted Cholesky), double, and THC.

THC factors are seeded by a symmetric CP decomposition of the Cholesky three-tensor
and then refined by L1-regularized least squares on the full tensor.
"""

from __future__ import annotations

import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np
from scipy.optimize import minimize

from .integrals import Hamiltonian

logger = logging.getLogger(__name__)

__all__ = [
    "CP3Factors",
    "DFFactors",
    "FactorizationError",
    "RankSelection",
    "SFFactors",
    "THCFactors",
    "cholesky_sf",
    "cp3_init",
    "double_factorize",
    "factorization_error",
    "load_factors",
    "reconstruct_eri",
    "save_factors",
    "select_rank",
    "select_rank_from_errors",
    "suggest_thc_rank",
    "thc_loss_and_gradient",
    "thc_optimize",
]

DEFAULT_CHOLESKY_THRESHOLD = 1e-8
NEGATIVE_DIAGONAL_TOL = 1e-6
DEFAULT_RANK_THRESHOLD = 1.0e-3


class FactorizationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SFFactors:
    """Cholesky vectors ``B[chi]`` (symmetric N x N each) in pivot order."""

    vectors: np.ndarray
    pivots: tuple[int, ...] = ()
    pivot_diagonals: tuple[float, ...] = ()
    residual_max_diagonal: float = 0.0

    method = "sf"

    @property
    def n_orbitals(self) -> int:
        return self.vectors.shape[1]

    @property
    def rank(self) -> int:
        return self.vectors.shape[0]

    @property
    def gamma(self) -> int:
        return self.n_orbitals**2 * self.rank


@dataclass(frozen=True, eq=False)
class DFFactors:
    """Per-leaf truncated eigendecompositions ``B[chi] ~ U diag(f) U^T``."""

    eigenvectors: tuple[np.ndarray, ...]
    eigenvalues: tuple[np.ndarray, ...]
    n_orbitals: int
    eig_threshold: float = 0.0

    method = "df"

    @property
    def rank(self) -> int:
        return len(self.eigenvalues)

    @property
    def leaf_ranks(self) -> tuple[int, ...]:
        return tuple(len(f) for f in self.eigenvalues)

    @property
    def average_rank(self) -> float:
        return sum(self.leaf_ranks) / self.rank if self.rank else 0.0

    @property
    def gamma(self) -> int:
        return self.n_orbitals * sum(self.leaf_ranks)


@dataclass(frozen=True, eq=False)
class THCFactors:
    """``(ij|kl) ~ sum_PQ X_iP X_jP Z_PQ X_kQ X_lQ``."""

    leaf: np.ndarray
    core: np.ndarray
    regularizer: float = 0.0
    converged: bool = True
    loss_history: tuple[float, ...] = ()
    seed: int | None = None

    method = "thc"

    def __post_init__(self):
        core = np.asarray(self.core, dtype=np.float64)
        object.__setattr__(self, "core", 0.5 * (core + core.T))
        object.__setattr__(self, "leaf", np.asarray(self.leaf, dtype=np.float64))

    @property
    def n_orbitals(self) -> int:
        return self.leaf.shape[0]

    @property
    def rank(self) -> int:
        return self.leaf.shape[1]

    @property
    def gamma(self) -> int:
        return self.rank**2


@dataclass(frozen=True, eq=False)
class CP3Factors:
    """Symmetric CP decomposition ``B[i, j, chi] ~ sum_t beta_it beta_jt zeta_chi,t``."""

    beta: np.ndarray
    zeta: np.ndarray
    residual: float
    objective_history: tuple[float, ...]
    seed: int

    @property
    def rank(self) -> int:
        return self.beta.shape[1]


Factors = Union[SFFactors, DFFactors, THCFactors]


# -- single factorization ----------------------------------------------------


def cholesky_sf(
    ham: Hamiltonian,
    threshold: float | None = DEFAULT_CHOLESKY_THRESHOLD,
    rank: int | None = None,
) -> SFFactors:
    """Pivoted Cholesky decomposition of the pair matrix ``V[(ij), (kl)]``.

    Stops when the largest residual diagonal drops to ``threshold`` or, if
    ``rank`` is given, after ``rank`` vectors. Fewer vectors are returned when
    the residual vanishes first. Ties between equal diagonals go to the lowest
    flat pair index.
    """
    if rank is None and (threshold is None or threshold <= 0):
        raise FactorizationError("threshold must be positive")
    if rank is not None and rank < 0:
        raise FactorizationError("rank must be non-negative")
    n = ham.n_orbitals
    v = ham.eri.reshape(n * n, n * n)
    diag = v.diagonal().copy()
    if diag.min(initial=0.0) < -NEGATIVE_DIAGONAL_TOL:
        raise FactorizationError(f"negative ERI diagonal {diag.min():.3e}: not a valid ERI tensor")
    scale = max(float(diag.max(initial=0.0)), 1.0)
    max_vectors = n * n if rank is None else min(rank, n * n)

    vecs: list[np.ndarray] = []
    pivots: list[int] = []
    pivot_diag: list[float] = []
    while len(vecs) < max_vectors:
        p = int(np.argmax(diag))
        dmax = float(diag[p])
        if rank is None and dmax <= threshold:
            break
        if dmax <= 1e-14 * scale:
            break
        col = v[:, p].copy()
        if vecs:
            lmat = np.asarray(vecs)
            col -= lmat.T @ lmat[:, p]
        vec = col / np.sqrt(dmax)
        vecs.append(vec)
        pivots.append(p)
        pivot_diag.append(dmax)
        diag -= vec**2
        if diag.min() < -NEGATIVE_DIAGONAL_TOL:
            raise FactorizationError(
                f"residual diagonal {diag.min():.3e} below -{NEGATIVE_DIAGONAL_TOL}: not a valid ERI tensor"
            )
    if vecs:
        b = np.asarray(vecs).reshape(-1, n, n)
        b = 0.5 * (b + b.transpose(0, 2, 1))
    else:
        b = np.zeros((0, n, n))
    return SFFactors(b, tuple(pivots), tuple(pivot_diag), float(max(diag.max(initial=0.0), 0.0)))


# -- double factorization ----------------------------------------------------


def double_factorize(sf: SFFactors, eig_threshold: float = 0.0) -> DFFactors:
    """Diagonalize each Cholesky leaf and drop eigenpairs with ``|f| < eig_threshold``."""
    if eig_threshold < 0:
        raise FactorizationError("eig_threshold must be non-negative")
    vecs, vals = [], []
    for leaf in sf.vectors:
        f, u = np.linalg.eigh(leaf)
        keep = np.abs(f) >= eig_threshold
        vecs.append(u[:, keep])
        vals.append(f[keep])
    return DFFactors(tuple(vecs), tuple(vals), sf.n_orbitals, eig_threshold)


# -- CP3 initialization ------------------------------------------------------


def _cp3_model(beta: np.ndarray, zeta: np.ndarray) -> np.ndarray:
    return np.einsum("it,jt,xt->ijx", beta, beta, zeta, optimize=True)


def _cp3_objective(btensor: np.ndarray, beta: np.ndarray, zeta: np.ndarray) -> float:
    return float(np.sum((btensor - _cp3_model(beta, zeta)) ** 2))


def _solve_gram(gram: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``X @ gram = rhs`` for X, ridge-regularizing a singular gram matrix."""
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > 1e12:
        warnings.warn("singular Gram matrix in CP3 least squares; using regularized solve",
                      RuntimeWarning, stacklevel=3)
        ridge = 1e-10 * max(np.trace(gram) / len(gram), 1e-300)
        gram = gram + ridge * np.eye(len(gram))
    return np.linalg.solve(gram, rhs.T).T


def cp3_init(
    sf: SFFactors,
    rank: int,
    sweeps: int = 500,
    seed: int = 0,
    tol: float = 1e-12,
) -> tuple[CP3Factors, THCFactors]:
    """Fit the symmetric CP3 model to the Cholesky tensor by alternating least squares.

    Each sweep solves the first-mode least-squares problem with the second mode
    held at the current ``beta`` and moves ``beta`` toward that solution with a
    backtracking step that never raises the objective, then solves exactly for
    ``zeta``. The THC core is the Gram matrix ``zeta^T zeta``.
    """
    if rank < 1:
        raise FactorizationError("CP3 rank must be >= 1")
    btensor = sf.vectors.transpose(1, 2, 0)
    n, _, nvec = btensor.shape
    rng = np.random.default_rng(seed)
    scale = (np.linalg.norm(btensor) / rank) ** (1.0 / 3.0) if btensor.size else 1.0
    beta = rng.uniform(-1.0, 1.0, (n, rank)) * scale
    zeta = rng.uniform(-1.0, 1.0, (nvec, rank)) * scale

    history = [_cp3_objective(btensor, beta, zeta)]
    for _ in range(sweeps):
        rhs = np.einsum("ijx,jt,xt->it", btensor, beta, zeta, optimize=True)
        target = _solve_gram((beta.T @ beta) * (zeta.T @ zeta), rhs)
        obj = history[-1]
        step = 1.0
        while step > 1e-4:
            trial = beta + step * (target - beta)
            trial_obj = _cp3_objective(btensor, trial, zeta)
            if trial_obj <= obj:
                beta, obj = trial, trial_obj
                break
            step *= 0.5

        rhs = np.einsum("ijx,it,jt->xt", btensor, beta, beta, optimize=True)
        gram = beta.T @ beta
        trial = _solve_gram(gram * gram, rhs)
        trial_obj = _cp3_objective(btensor, beta, trial)
        # exact in exact arithmetic; guard against rounding in near-singular solves
        if trial_obj <= obj:
            zeta, obj = trial, trial_obj
        history.append(obj)
        if history[-1] <= 1e-30 * history[0] or history[-2] - history[-1] <= tol * history[-2]:
            break

    residual = float(np.sqrt(_cp3_objective(btensor, beta, zeta)))
    cp3 = CP3Factors(beta, zeta, residual, tuple(history), seed)
    thc = THCFactors(beta.copy(), zeta.T @ zeta, seed=seed)
    return cp3, thc


# -- THC refinement ----------------------------------------------------------


def _pair_products(leaf: np.ndarray) -> np.ndarray:
    n, m = leaf.shape
    return (leaf[:, None, :] * leaf[None, :, :]).reshape(n * n, m)


def thc_loss_and_gradient(
    eri: np.ndarray, leaf: np.ndarray, core: np.ndarray, regularizer: float = 0.0
) -> tuple[float, np.ndarray, np.ndarray]:
    """Regularized THC loss and its gradients with respect to ``leaf`` and ``core``.

    ``L = ||eri - THC(X, Z)||^2 + C * sum |Z|`` with ``Z`` symmetrized first; the
    L1 subgradient is ``sign(Z)`` (zero at zero).
    """
    n, m = leaf.shape
    z = 0.5 * (core + core.T)
    y = _pair_products(leaf)
    resid = y @ z @ y.T - eri.reshape(n * n, n * n)
    loss = float(np.sum(resid**2)) + regularizer * float(np.sum(np.abs(z)))

    ry = resid @ y
    grad_z = 2.0 * (y.T @ ry) + regularizer * np.sign(z)
    grad_z = 0.5 * (grad_z + grad_z.T)
    g_pair = (4.0 * ry @ z).reshape(n, n, m)
    grad_x = 2.0 * np.einsum("ijp,jp->ip", g_pair, leaf)
    return loss, grad_x, grad_z


def thc_optimize(
    ham: Hamiltonian,
    init: THCFactors,
    max_iter: int = 5000,
    tol: float = 1e-10,
    regularizer: float | None = None,
) -> THCFactors:
    """Refine THC factors by L-BFGS-B on the L1-regularized least-squares loss.

    The regularizer weight defaults to ``L2(init) / sum|Z_init|`` so both terms
    start equal. The best iterate seen is returned, so the total loss never
    exceeds its starting value.
    """
    n, m = init.leaf.shape
    if n != ham.n_orbitals:
        raise FactorizationError("THC leaf rows do not match the orbital count")
    eri = ham.eri
    l2_init = float(np.sum((reconstruct_eri(init) - eri) ** 2))
    if regularizer is None:
        l1_init = float(np.sum(np.abs(init.core)))
        regularizer = l2_init / l1_init if l1_init > 0 else 0.0

    def unpack(x):
        return x[: n * m].reshape(n, m), x[n * m :].reshape(m, m)

    best = {"loss": np.inf, "x": None}
    history: list[float] = []

    def fun(x):
        leaf, core = unpack(x)
        loss, gx, gz = thc_loss_and_gradient(eri, leaf, core, regularizer)
        if not np.isfinite(loss) or not (np.all(np.isfinite(gx)) and np.all(np.isfinite(gz))):
            raise FactorizationError("non-finite THC loss or gradient")
        if loss < best["loss"]:
            best["loss"], best["x"] = loss, x.copy()
        return loss, np.concatenate([gx.ravel(), gz.ravel()])

    x0 = np.concatenate([init.leaf.ravel(), init.core.ravel()])
    res = minimize(
        fun,
        x0,
        jac=True,
        method="L-BFGS-B",
        callback=lambda xk: history.append(best["loss"]),
        options={"maxiter": max_iter, "ftol": tol, "gtol": tol * 1e-2, "maxcor": 20},
    )
    leaf, core = unpack(best["x"])
    converged = bool(res.success) and res.nit < max_iter
    if not converged:
        logger.info("THC optimization stopped without convergence: %s", res.message)
    full_history = (fun(x0)[0], *history)
    return THCFactors(leaf.copy(), core.copy(), regularizer, converged, full_history, init.seed)


def suggest_thc_rank(n_orbitals: int, factor: float = 5.0) -> int:
    """Empirical default THC rank, roughly five times the orbital count."""
    return max(1, int(round(factor * n_orbitals)))


# -- reconstruction / error --------------------------------------------------


def reconstruct_eri(factors: Factors) -> np.ndarray:
    """Dense chemist-notation tensor represented by ``factors``."""
    if isinstance(factors, SFFactors):
        n, b = factors.n_orbitals, factors.vectors
        flat = b.reshape(len(b), n * n)
        return (flat.T @ flat).reshape(n, n, n, n)
    if isinstance(factors, DFFactors):
        n = factors.n_orbitals
        leaves = np.zeros((factors.rank, n, n))
        for x, (u, f) in enumerate(zip(factors.eigenvectors, factors.eigenvalues)):
            leaf = (u * f) @ u.T
            leaves[x] = 0.5 * (leaf + leaf.T)
        flat = leaves.reshape(factors.rank, n * n)
        return (flat.T @ flat).reshape(n, n, n, n)
    if isinstance(factors, THCFactors):
        n = factors.n_orbitals
        y = _pair_products(factors.leaf)
        return (y @ factors.core @ y.T).reshape(n, n, n, n)
    raise TypeError(f"unsupported factors {type(factors).__name__}")


def factorization_error(ham: Hamiltonian, factors: Factors) -> float:
    """Frobenius norm of ``eri - reconstruct(factors)`` in Hartree."""
    if factors.n_orbitals != ham.n_orbitals:
        raise FactorizationError(
            f"factors for {factors.n_orbitals} orbitals, Hamiltonian has {ham.n_orbitals}"
        )
    return float(np.linalg.norm(ham.eri - reconstruct_eri(factors)))


# -- rank selection ----------------------------------------------------------


@dataclass(frozen=True)
class RankSelection:
    rank: int
    threshold: float
    table: tuple[tuple[int, float], ...] = field(default=())


def select_rank_from_errors(
    ranks: Sequence[int], errors: Sequence[float], threshold: float = DEFAULT_RANK_THRESHOLD
) -> int:
    """Smallest rank whose error, and every larger rank's error, is within ``threshold``."""
    if len(ranks) != len(errors) or not ranks:
        raise FactorizationError("ranks and errors must be non-empty and aligned")
    if list(ranks) != sorted(ranks):
        raise FactorizationError("rank grid must be ascending")
    chosen = None
    for rank, err in zip(reversed(ranks), reversed(errors)):
        if abs(err) > threshold:
            break
        chosen = rank
    if chosen is None:
        raise FactorizationError(f"no rank on the grid stays within {threshold} Hartree")
    return chosen


def _factorize_at(ham: Hamiltonian, method: str, rank: int, seed: int, options: dict) -> Factors:
    if method == "sf":
        return cholesky_sf(ham, rank=rank)
    if method == "df":
        sf = cholesky_sf(ham, rank=rank)
        return double_factorize(sf, options.get("eig_threshold", 0.0))
    if method == "thc":
        sf = cholesky_sf(ham, threshold=options.get("cholesky_threshold", DEFAULT_CHOLESKY_THRESHOLD))
        _, init = cp3_init(sf, rank, sweeps=options.get("sweeps", 500), seed=seed)
        return thc_optimize(ham, init, max_iter=options.get("max_iter", 5000))
    raise FactorizationError(f"unknown factorization method {method!r}")


def select_rank(
    ham: Hamiltonian,
    method: str,
    rank_grid: Sequence[int],
    energy_evaluator: Callable[[Hamiltonian], float] | None = None,
    threshold: float = DEFAULT_RANK_THRESHOLD,
    seed: int = 0,
    workers: int = 1,
    **options,
) -> RankSelection:
    """Factorize at each grid rank, score the truncated Hamiltonian, apply the persistence rule.

    ``energy_evaluator`` maps a Hamiltonian with reconstructed integrals to its
    energy error; it defaults to the exact-diagonalization difference.
    """
    grid = list(rank_grid)
    if not grid or grid != sorted(grid):
        raise FactorizationError("rank grid must be non-empty and ascending")
    if energy_evaluator is None:
        from .oracle import energy_error_evaluator

        energy_evaluator = energy_error_evaluator(ham)

    def cell(rank: int) -> float:
        factors = _factorize_at(ham, method, rank, seed, options)
        return float(energy_evaluator(ham.with_eri(reconstruct_eri(factors))))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            errors = list(pool.map(cell, grid))
    else:
        errors = [cell(r) for r in grid]
    rank = select_rank_from_errors(grid, errors, threshold)
    return RankSelection(rank, threshold, tuple(zip(grid, errors)))


# -- archives ----------------------------------------------------------------


def _write_blob(directory: Path, name: str, arr: np.ndarray) -> dict:
    (directory / f"{name}.bin").write_bytes(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return {"name": name, "file": f"{name}.bin", "shape": list(arr.shape)}


def _read_blob(directory: Path, spec: dict) -> np.ndarray:
    data = np.frombuffer((directory / spec["file"]).read_bytes(), dtype="<f8")
    return data.reshape(spec["shape"]).copy()


def save_factors(factors: Factors, directory: str | Path, extra: dict | None = None) -> Path:
    """Write a factor archive: ``manifest.json`` plus little-endian float64 blobs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "format": "estimator-factors",
        "version": 1,
        "method": factors.method,
        "n_orbitals": factors.n_orbitals,
        "endianness": "little",
        "dtype": "float64",
    }
    if isinstance(factors, SFFactors):
        manifest.update(rank=factors.rank, pivots=list(factors.pivots),
                        pivot_diagonals=list(factors.pivot_diagonals),
                        residual_max_diagonal=factors.residual_max_diagonal)
        blobs = [_write_blob(directory, "vectors", factors.vectors)]
    elif isinstance(factors, DFFactors):
        n = factors.n_orbitals
        u_all = np.concatenate(factors.eigenvectors, axis=1) if factors.rank else np.zeros((n, 0))
        f_all = np.concatenate(factors.eigenvalues) if factors.rank else np.zeros(0)
        manifest.update(rank=factors.rank, leaf_ranks=list(factors.leaf_ranks),
                        average_rank=factors.average_rank, eig_threshold=factors.eig_threshold)
        blobs = [_write_blob(directory, "eigenvectors", u_all),
                 _write_blob(directory, "eigenvalues", f_all)]
    else:
        manifest.update(rank=factors.rank, regularizer=factors.regularizer,
                        converged=factors.converged, seed=factors.seed,
                        loss_history=list(factors.loss_history))
        blobs = [_write_blob(directory, "leaf", factors.leaf),
                 _write_blob(directory, "core", factors.core)]
    manifest["blobs"] = blobs
    if extra:
        manifest["extra"] = extra
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return directory


def load_factors(directory: str | Path) -> Factors:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    blobs = {b["name"]: _read_blob(directory, b) for b in manifest["blobs"]}
    method = manifest["method"]
    if method == "sf":
        return SFFactors(blobs["vectors"], tuple(manifest["pivots"]),
                         tuple(manifest["pivot_diagonals"]), manifest["residual_max_diagonal"])
    if method == "df":
        splits = np.cumsum(manifest["leaf_ranks"])[:-1]
        vecs = tuple(np.split(blobs["eigenvectors"], splits, axis=1)) if manifest["rank"] else ()
        vals = tuple(np.split(blobs["eigenvalues"], splits)) if manifest["rank"] else ()
        return DFFactors(vecs, vals, manifest["n_orbitals"], manifest["eig_threshold"])
    if method == "thc":
        return THCFactors(blobs["leaf"], blobs["core"], manifest["regularizer"],
                          manifest["converged"], tuple(manifest["loss_history"]), manifest["seed"])
    raise FactorizationError(f"unknown archive method {method!r}")
