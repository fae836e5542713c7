"""Shared fixtures: small synthetic Hamiltonians with exact 8-fold symmetry."""

from __future__ import annotations

import numpy as np
import pytest

from estimator.integrals import Hamiltonian


def random_hamiltonian(n: int, seed: int = 0, n_alpha: int | None = None, n_beta: int | None = None,
                       n_vectors: int | None = None, scale: float = 0.1) -> Hamiltonian:
    """Symmetric one-body matrix and a PSD two-body tensor ``sum_l L_pq L_rs``."""
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(n, n))
    h = h + h.T
    nv = n_vectors or n * (n + 1) // 2
    vecs = rng.normal(size=(nv, n, n))
    vecs = vecs + vecs.transpose(0, 2, 1)
    eri = scale * np.einsum("lpq,lrs->pqrs", vecs, vecs)
    na = n // 2 if n_alpha is None else n_alpha
    nb = n // 2 if n_beta is None else n_beta
    return Hamiltonian(h, eri, 0.5, na, nb)


def hubbard_dimer(t: float = 1.0, u: float = 4.0) -> Hamiltonian:
    h = np.array([[0.0, -t], [-t, 0.0]])
    eri = np.zeros((2, 2, 2, 2))
    eri[0, 0, 0, 0] = eri[1, 1, 1, 1] = u
    return Hamiltonian(h, eri, 0.0, 1, 1)


@pytest.fixture
def ham4():
    return random_hamiltonian(4, seed=11)


@pytest.fixture
def dimer():
    return hubbard_dimer()
