"""Anisotropic Heisenberg (XXZ) chain in spin and fermionized form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .operators import IntegralSet, PauliOperator


@dataclass(frozen=True)
class XXZSpec:
    """Open or periodic XXZ chain.

    ``J`` is the signed transverse coupling (antiferromagnetic for ``J < 0``)
    and ``K`` the longitudinal one; energies are reported in units of ``|J|``.
    """

    n_sites: int = 8
    J: float = -1.0
    K: float = -1.0
    boundary: str = "open"

    def __post_init__(self):
        if self.n_sites < 2:
            raise ValueError("an XXZ chain needs at least two sites")
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")

    @classmethod
    def from_ratio(cls, k_over_j: float, n_sites: int = 8, boundary: str = "open", J: float = -1.0) -> "XXZSpec":
        return cls(n_sites=n_sites, J=J, K=k_over_j * J, boundary=boundary)

    @property
    def bonds(self) -> list[tuple[int, int]]:
        pairs = [(i, i + 1) for i in range(self.n_sites - 1)]
        if self.boundary == "periodic" and self.n_sites > 2:
            pairs.append((self.n_sites - 1, 0))
        return pairs


def xxz_spin_hamiltonian(spec: XXZSpec) -> PauliOperator:
    """``-(J/2) sum (XX + YY) - (K/2) sum ZZ`` over nearest-neighbour bonds."""
    n = spec.n_sites
    H = PauliOperator(n)
    for i, j in spec.bonds:
        H = H + PauliOperator.single(n, {i: "X", j: "X"}, -spec.J / 2)
        H = H + PauliOperator.single(n, {i: "Y", j: "Y"}, -spec.J / 2)
        H = H + PauliOperator.single(n, {i: "Z", j: "Z"}, -spec.K / 2)
    return H


def xxz_fermion_integrals(spec: XXZSpec) -> IntegralSet:
    """Spinless-fermion integrals of the Jordan-Wigner fermionized chain.

    Only open chains are supported: the boundary bond of a periodic chain
    keeps a parity-dependent Z string and is not a two-body operator.
    """
    if spec.boundary != "open":
        raise NotImplementedError("fermionization is only local for open chains")
    n = spec.n_sites
    h = np.zeros((n, n))
    g = np.zeros((n, n, n, n))
    e0 = 0.0
    for i, j in spec.bonds:
        h[i, j] = h[j, i] = -spec.J
        h[i, i] += spec.K
        h[j, j] += spec.K
        g[i, i, j, j] = g[j, j, i, i] = -2.0 * spec.K
        e0 -= spec.K / 2
    return IntegralSet(n, e0, h, g, "spinless")


def site_reversal(n_sites: int) -> np.ndarray:
    """One-body permutation matrix ``i -> n-1-i``."""
    return np.eye(n_sites)[::-1].copy()


def parity_operator(n_sites: int) -> sp.csr_matrix:
    """Site-reversal unitary on the fermionic Fock space.

    Defined by ``P a+_i P^-1 = a+_{n-1-i}`` and ``P|vac> = |vac>``.  On an
    occupation string with ``k`` particles this reverses the string and
    multiplies by the reordering sign ``(-1)**(k(k-1)/2)``.
    """
    dim = 1 << n_sites
    idx = np.arange(dim)
    rev = np.zeros(dim, dtype=np.int64)
    count = np.zeros(dim, dtype=np.int64)
    for bit in range(n_sites):
        b = (idx >> bit) & 1
        rev |= b << (n_sites - 1 - bit)
        count += b
    sign = np.where((count * (count - 1) // 2) % 2 == 0, 1.0, -1.0)
    return sp.csr_matrix((sign, (rev, idx)), shape=(dim, dim))
