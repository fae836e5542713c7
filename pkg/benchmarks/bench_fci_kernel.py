"""Compare the compiled and pure-Python Slater-Condon Hamiltonian builders.

    python3 benchmarks/bench_fci_kernel.py [--repeat 3] [--sizes 6:3:3 8:4:4]

Each size is ``n_orbitals:n_alpha:n_beta``. Both kernels must produce the same
matrix; the script exits non-zero if they disagree.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np
import scipy.sparse as sp

from estimator import _kernels
from estimator.integrals import Hamiltonian
from estimator.oracle import DeterminantBasis, hamiltonian_matrix


def random_hamiltonian(n: int, seed: int = 0) -> Hamiltonian:
    rng = np.random.default_rng(seed)
    h = rng.normal(size=(n, n))
    vecs = rng.normal(size=(n * (n + 1) // 2, n, n))
    vecs = vecs + vecs.transpose(0, 2, 1)
    return Hamiltonian(h + h.T, 0.1 * np.einsum("lpq,lrs->pqrs", vecs, vecs))


def best_of(fn, repeat: int) -> tuple[float, sp.csr_matrix]:
    times, out = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--sizes", nargs="+", default=["4:2:2", "6:3:3", "8:4:4"])
    args = parser.parse_args(argv)

    compiled = _kernels.compiled_build_hamiltonian_coo
    print(f"selected backend: {_kernels.BACKEND}")
    if compiled is None:
        print("compiled extension unavailable; timing the Python kernel only")
    print(f"{'N':>3} {'na':>3} {'nb':>3} {'dim':>8} {'nnz':>10} {'python s':>10} {'compiled s':>11} {'speedup':>8}")
    status = 0
    for spec in args.sizes:
        n, na, nb = (int(x) for x in spec.split(":"))
        ham = random_hamiltonian(n)
        basis = DeterminantBasis(n, na, nb)
        t_py, m_py = best_of(lambda: hamiltonian_matrix(ham, basis, _kernels.python_build_hamiltonian_coo),
                             args.repeat)
        if compiled is not None:
            t_c, m_c = best_of(lambda: hamiltonian_matrix(ham, basis, compiled), args.repeat)
            diff = abs(m_py - m_c).max() if m_py.nnz else 0.0
            if diff > 1e-12:
                print(f"kernels disagree at {spec}: max |diff| = {diff:.3e}", file=sys.stderr)
                status = 1
            tail = f"{t_c:>11.4f} {t_py / t_c:>7.1f}x"
        else:
            tail = f"{'-':>11} {'-':>8}"
        print(f"{n:>3} {na:>3} {nb:>3} {basis.dimension:>8} {m_py.nnz:>10} {t_py:>10.4f} {tail}")
    return status


if __name__ == "__main__":
    sys.exit(main())
