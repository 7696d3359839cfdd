"""Symmetry-aware ADAPT-VQE on small fermionic and spin Hamiltonians."""

__version__ = "0.1.0"
