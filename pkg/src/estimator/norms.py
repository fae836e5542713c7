"""L1 norms (lambda) of the Hamiltonian in each factorized representation."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .factorize import DFFactors, SFFactors, THCFactors
from .integrals import Hamiltonian

__all__ = [
    "LambdaBreakdown",
    "compute_lambda",
    "effective_one_body",
    "lambda_df",
    "lambda_one_body",
    "lambda_sf",
    "lambda_thc",
]


@dataclass(frozen=True)
class LambdaBreakdown:
    lambda_t: float
    lambda_two: float
    method: str
    rank: int = 0

    def __post_init__(self):
        if not (self.lambda_t >= 0 and self.lambda_two >= 0):
            raise ValueError("lambda components must be non-negative")
        if not (np.isfinite(self.lambda_t) and np.isfinite(self.lambda_two)):
            raise ValueError("lambda components must be finite")

    @property
    def lambda_total(self) -> float:
        return self.lambda_t + self.lambda_two

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda_total"] = self.lambda_total
        return d


def effective_one_body(ham: Hamiltonian) -> np.ndarray:
    """``T_pq = h_pq - 1/2 sum_l (pl|lq) + sum_l (pq|ll)``."""
    eri = ham.eri
    t = ham.h - 0.5 * np.einsum("pllq->pq", eri) + np.einsum("pqll->pq", eri)
    return 0.5 * (t + t.T)


def lambda_one_body(ham: Hamiltonian) -> float:
    return float(np.sum(np.abs(np.linalg.eigvalsh(effective_one_body(ham)))))


def lambda_sf(ham: Hamiltonian, sf: SFFactors) -> LambdaBreakdown:
    per_leaf = np.abs(sf.vectors).sum(axis=(1, 2))
    return LambdaBreakdown(lambda_one_body(ham), 0.25 * float(np.sum(per_leaf**2)), "sf", sf.rank)


def lambda_df(ham: Hamiltonian, df: DFFactors) -> LambdaBreakdown:
    two = 0.25 * sum(float(np.sum(np.abs(f))) ** 2 for f in df.eigenvalues)
    return LambdaBreakdown(lambda_one_body(ham), two, "df", df.rank)


def lambda_thc(ham: Hamiltonian, thc: THCFactors) -> LambdaBreakdown:
    # column norms absorbed into the core
    c = np.sum(thc.leaf**2, axis=0)
    two = 0.5 * float(np.sum(np.abs(thc.core) * np.outer(c, c)))
    return LambdaBreakdown(lambda_one_body(ham), two, "thc", thc.rank)


def compute_lambda(ham: Hamiltonian, factors) -> LambdaBreakdown:
    if isinstance(factors, SFFactors):
        return lambda_sf(ham, factors)
    if isinstance(factors, DFFactors):
        return lambda_df(ham, factors)
    if isinstance(factors, THCFactors):
        return lambda_thc(ham, factors)
    raise TypeError(f"unsupported factors {type(factors).__name__}")
