"""Active-space Hamiltonian factorization and quantum/classical cost estimation."""
__version__ = "0.1.0"
