"""Exact diagonalization in a fixed (n_alpha, n_beta) determinant space.

Used as the truncation-error evaluator for rank selection and to report the
largest single-determinant weight of the ground state.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import comb
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh

from . import _kernels
from .integrals import Hamiltonian

__all__ = [
    "DeterminantBasis",
    "OracleError",
    "OracleResult",
    "energy_error_evaluator",
    "fci_ground_state",
    "hamiltonian_matrix",
    "max_basis_overlap",
    "truncation_energy_error",
]

MAX_DIMENSION = 2_000_000
DENSE_LIMIT = 2000
DEGENERACY_GAP = 1e-10


class OracleError(ValueError):
    pass


def _strings(n: int, k: int) -> list[int]:
    return sorted(sum(1 << p for p in occ) for occ in itertools.combinations(range(n), k))


def _annihilate(state: int, p: int) -> tuple[int, int]:
    if not state >> p & 1:
        return 0, 0
    return state ^ (1 << p), -1 if bin(state & ((1 << p) - 1)).count("1") % 2 else 1


def _create(state: int, p: int) -> tuple[int, int]:
    if state >> p & 1:
        return 0, 0
    return state | (1 << p), -1 if bin(state & ((1 << p) - 1)).count("1") % 2 else 1


def _apply(state: int, ops: list[tuple[str, int]]) -> tuple[int, int]:
    """Apply ladder operators right-to-left (``ops`` listed left-to-right)."""
    sign = 1
    for kind, p in reversed(ops):
        state, s = (_create if kind == "+" else _annihilate)(state, p)
        if s == 0:
            return 0, 0
        sign *= s
    return state, sign


def _excitation_tables(strings: list[int], n: int, k: int):
    index = {s: i for i, s in enumerate(strings)}
    occ = np.array([[p for p in range(n) if s >> p & 1] for s in strings], dtype=np.int64)
    occ = occ.reshape(len(strings), k)
    singles, doubles = [], []
    for s in strings:
        holes = [p for p in range(n) if s >> p & 1]
        parts = [p for p in range(n) if not s >> p & 1]
        row = []
        for i in holes:
            for a in parts:
                t, sg = _apply(s, [("+", a), ("-", i)])
                row.append((i, a, index[t], sg))
        singles.append(row)
        row = []
        for i, j in itertools.combinations(holes, 2):
            for a, b in itertools.combinations(parts, 2):
                t, sg = _apply(s, [("+", a), ("-", i), ("+", b), ("-", j)])
                row.append((i, j, a, b, index[t], sg))
        doubles.append(row)
    n_single = k * (n - k)
    n_double = comb(k, 2) * comb(n - k, 2)
    singles = np.array(singles, dtype=np.int64).reshape(len(strings), n_single, 4)
    doubles = np.array(doubles, dtype=np.int64).reshape(len(strings), n_double, 6)
    return occ, singles, doubles


@dataclass(frozen=True, eq=False)
class DeterminantBasis:
    """Determinants ordered by (alpha string, beta string), strings ascending as integers."""

    n_orbitals: int
    n_alpha: int
    n_beta: int

    def __post_init__(self):
        n = self.n_orbitals
        if not (0 <= self.n_alpha <= n and 0 <= self.n_beta <= n):
            raise OracleError(f"electron counts ({self.n_alpha}, {self.n_beta}) exceed {n} orbitals")
        object.__setattr__(self, "alpha_strings", _strings(n, self.n_alpha))
        object.__setattr__(self, "beta_strings", _strings(n, self.n_beta))

    @property
    def dimension(self) -> int:
        return comb(self.n_orbitals, self.n_alpha) * comb(self.n_orbitals, self.n_beta)

    def determinant(self, index: int) -> tuple[int, int]:
        nb = len(self.beta_strings)
        return self.alpha_strings[index // nb], self.beta_strings[index % nb]

    def index(self, alpha: int, beta: int) -> int:
        return self.alpha_strings.index(alpha) * len(self.beta_strings) + self.beta_strings.index(beta)

    def __len__(self) -> int:
        return self.dimension

    def __iter__(self):
        return itertools.product(self.alpha_strings, self.beta_strings)


def hamiltonian_matrix(ham: Hamiltonian, basis: DeterminantBasis, kernel=None) -> sp.csr_matrix:
    """Sparse Hamiltonian matrix over ``basis`` from the Slater-Condon rules (E_core included)."""
    n = ham.n_orbitals
    if basis.n_orbitals != n:
        raise OracleError("basis and Hamiltonian disagree on the orbital count")
    occ_a, sing_a, dbl_a = _excitation_tables(basis.alpha_strings, n, basis.n_alpha)
    occ_b, sing_b, dbl_b = _excitation_tables(basis.beta_strings, n, basis.n_beta)
    per_row = 1 + sing_a.shape[1] + sing_b.shape[1] + dbl_a.shape[1] + dbl_b.shape[1]
    per_row += sing_a.shape[1] * sing_b.shape[1]
    dim = basis.dimension
    build = kernel or _kernels.build_hamiltonian_coo
    rows, cols, vals = build(
        occ_a, occ_b, sing_a, sing_b, dbl_a, dbl_b,
        np.ascontiguousarray(ham.h), np.ascontiguousarray(ham.eri), ham.e_core, dim * per_row,
    )
    return sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))


@dataclass(frozen=True, eq=False)
class OracleResult:
    energy: float
    coefficients: np.ndarray
    basis: DeterminantBasis
    degenerate: bool = False
    method: str = "dense"

    @property
    def max_overlap(self) -> float:
        return float(np.max(np.abs(self.coefficients) ** 2))


def fci_ground_state(
    ham: Hamiltonian,
    n_alpha: int | None = None,
    n_beta: int | None = None,
    method: str = "auto",
    seed: int = 0,
) -> OracleResult:
    """Lowest eigenpair of ``ham`` in the (n_alpha, n_beta) sector.

    ``method`` is ``"dense"``, ``"iterative"`` (Lanczos via ARPACK) or ``"auto"``
    (dense up to 2000 determinants).
    """
    n_alpha = ham.n_alpha if n_alpha is None else n_alpha
    n_beta = ham.n_beta if n_beta is None else n_beta
    basis = DeterminantBasis(ham.n_orbitals, n_alpha, n_beta)
    dim = basis.dimension
    if dim > MAX_DIMENSION:
        raise OracleError(f"determinant space of {dim} exceeds the {MAX_DIMENSION} guard")
    if method == "auto":
        method = "dense" if dim <= DENSE_LIMIT else "iterative"
    mat = hamiltonian_matrix(ham, basis)

    if method == "dense" or dim <= 2:
        evals, evecs = np.linalg.eigh(mat.toarray())
        energy, vec = float(evals[0]), evecs[:, 0]
        gap = evals[1] - evals[0] if dim > 1 else np.inf
        method = "dense"
    elif method == "iterative":
        v0 = np.random.default_rng(seed).uniform(-1.0, 1.0, dim)
        k = 2 if dim > 2 else 1
        evals, evecs = eigsh(mat, k=k, which="SA", v0=v0, tol=1e-13)
        order = np.argsort(evals)
        energy, vec = float(evals[order[0]]), evecs[:, order[0]]
        gap = evals[order[1]] - evals[order[0]] if k > 1 else np.inf
    else:
        raise OracleError(f"unknown method {method!r}")

    vec = vec / np.linalg.norm(vec)
    # fix the arbitrary eigenvector sign: largest-weight coefficient positive
    if vec[int(np.argmax(np.abs(vec)))] < 0:
        vec = -vec
    return OracleResult(energy, vec, basis, bool(gap < DEGENERACY_GAP), method)


def max_basis_overlap(result: OracleResult) -> tuple[float, tuple[int, int]]:
    """Largest ``|c_i|^2`` and its (alpha, beta) bitmasks; ties go to the lowest index."""
    weights = np.abs(result.coefficients) ** 2
    idx = int(np.argmax(weights))
    return float(weights[idx]), result.basis.determinant(idx)


def truncation_energy_error(ham: Hamiltonian, factors) -> float:
    """Ground-energy change from replacing the ERIs by their factorized reconstruction."""
    from .factorize import reconstruct_eri

    approx = ham.with_eri(reconstruct_eri(factors))
    return fci_ground_state(approx).energy - fci_ground_state(ham).energy


def energy_error_evaluator(ham: Hamiltonian) -> Callable[[Hamiltonian], float]:
    """Closure returning ``E0(truncated) - E0(ham)`` with the reference solved once."""
    reference = fci_ground_state(ham).energy

    def evaluate(truncated: Hamiltonian) -> float:
        return fci_ground_state(truncated, ham.n_alpha, ham.n_beta).energy - reference

    return evaluate
