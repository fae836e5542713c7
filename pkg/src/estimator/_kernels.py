"""Select the Slater-Condon kernel: compiled extension if importable, else pure Python.

Set ``ESTIMATOR_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _slater_py

python_build_hamiltonian_coo = _slater_py.build_hamiltonian_coo

try:
    if os.environ.get("ESTIMATOR_PURE_PYTHON", "").strip() not in ("", "0"):
        raise ImportError("pure-Python kernels requested")
    from ._slater import build_hamiltonian_coo as compiled_build_hamiltonian_coo
except ImportError:
    compiled_build_hamiltonian_coo = None

if compiled_build_hamiltonian_coo is not None:
    build_hamiltonian_coo = compiled_build_hamiltonian_coo
    BACKEND = "cython"
else:
    build_hamiltonian_coo = python_build_hamiltonian_coo
    BACKEND = "python"
