"""Sector-restricted exact diagonalization.

Statevectors use the Jordan-Wigner ordering of :mod:`symadapt.operators`:
mode 0 is the leftmost character of a bitstring and the most significant
bit of the basis index, and ``|b>`` is ``a+_{i1} a+_{i2} ... |vac>`` with
ascending occupied indices.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .operators import FermionOperator, IntegralSet, PauliOperator, fermion_to_sparse, integrals_to_fermion_op

CLUSTER_TOL = 1e-9
RESIDUAL_TOL = 1e-9


def bitstring(index: int, n_modes: int) -> str:
    return format(index, f"0{n_modes}b")


def occupied(index: int, n_modes: int) -> list[int]:
    return [j for j in range(n_modes) if (index >> (n_modes - 1 - j)) & 1]


@dataclass(frozen=True)
class SectorBasis:
    """Occupation-number states with fixed particle number (and alpha count).

    For spin-orbital systems even modes are alpha and odd modes are beta.
    States are ordered lexicographically by bitstring.
    """

    n_modes: int
    n_particles: int
    n_alpha: int | None = None
    states: tuple[int, ...] = field(default=(), repr=False)

    @property
    def dim(self) -> int:
        return len(self.states)

    def __len__(self) -> int:
        return len(self.states)

    @property
    def bitstrings(self) -> list[str]:
        return [bitstring(s, self.n_modes) for s in self.states]

    def index(self, state: int | str) -> int:
        if isinstance(state, str):
            state = int(state, 2)
        return self.states.index(state)


def sector_basis(n_modes: int, n_particles: int, n_alpha: int | None = None) -> SectorBasis:
    if not 0 <= n_particles <= n_modes:
        raise ValueError(f"particle number {n_particles} outside [0, {n_modes}]")
    if n_alpha is not None:
        if n_modes % 2:
            raise ValueError("an alpha count needs an even number of spin orbitals")
        n_beta = n_particles - n_alpha
        half = n_modes // 2
        if not (0 <= n_alpha <= half and 0 <= n_beta <= half):
            raise ValueError(f"infeasible n_alpha={n_alpha} for N={n_particles} in {n_modes} modes")
    states = []
    for occ in itertools.combinations(range(n_modes), n_particles):
        if n_alpha is not None and sum(1 for j in occ if j % 2 == 0) != n_alpha:
            continue
        states.append(sum(1 << (n_modes - 1 - j) for j in occ))
    return SectorBasis(n_modes, n_particles, n_alpha, tuple(sorted(states)))


def full_space_matrix(op, n_modes: int | None = None) -> sp.csr_matrix:
    """Sparse ``2^n`` matrix of an integral set, fermion, Pauli or matrix operator."""
    if isinstance(op, IntegralSet):
        op = integrals_to_fermion_op(op)
    if isinstance(op, FermionOperator):
        return fermion_to_sparse(op)
    if isinstance(op, PauliOperator):
        return op.to_sparse()
    M = sp.csr_matrix(op)
    if n_modes is not None and M.shape != (1 << n_modes, 1 << n_modes):
        raise ValueError("matrix shape does not match the number of modes")
    return M


def restrict(op, basis: SectorBasis) -> np.ndarray:
    """Dense block of an operator inside the sector."""
    M = full_space_matrix(op, basis.n_modes)
    idx = np.array(basis.states, dtype=np.int64)
    return M[idx][:, idx].toarray()


def embed_to_statevector(basis: SectorBasis, vec: np.ndarray) -> np.ndarray:
    psi = np.zeros(1 << basis.n_modes, dtype=complex)
    psi[np.array(basis.states, dtype=np.int64)] = vec
    return psi


def project(basis: SectorBasis, psi: np.ndarray) -> np.ndarray:
    return np.asarray(psi)[np.array(basis.states, dtype=np.int64)]


@dataclass
class SpectrumResult:
    basis: SectorBasis
    energies: np.ndarray
    vectors: np.ndarray
    parity: list[int | None]
    s_squared: np.ndarray | None = None
    units: str = "hartree"

    @property
    def ground_energy(self) -> float:
        return float(self.energies[0])

    @property
    def gap(self) -> float:
        return float(self.energies[1] - self.energies[0])

    def state(self, i: int = 0) -> np.ndarray:
        """Full-space statevector of eigenpair ``i``."""
        return embed_to_statevector(self.basis, self.vectors[:, i])

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# energy units: {self.units}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "energy", "parity", "s_squared"])
        for i, e in enumerate(self.energies):
            p = "" if self.parity[i] is None else self.parity[i]
            s2 = "" if self.s_squared is None else f"{self.s_squared[i]:.12g}"
            w.writerow([i, f"{e:.15g}", p, s2])
        return buf.getvalue()


def _cluster_slices(evals: np.ndarray, tol: float):
    start = 0
    for i in range(1, len(evals) + 1):
        if i == len(evals) or evals[i] - evals[start] > tol:
            yield slice(start, i)
            start = i


def fci_solve(
    hamiltonian,
    basis: SectorBasis,
    k: int | None = None,
    parity=None,
    s_squared=None,
    units: str = "hartree",
) -> SpectrumResult:
    """Lowest ``k`` eigenpairs of ``hamiltonian`` inside ``basis``.

    ``parity`` and ``s_squared`` are optional symmetry operators (anything
    :func:`full_space_matrix` accepts).  Inside every degenerate cluster the
    eigenvectors are rotated to diagonalize the symmetry operators, so parity
    labels are exact.
    """
    dim = basis.dim
    k = dim if k is None else k
    if not 0 < k <= dim:
        raise ValueError(f"requested {k} states from a {dim}-dimensional sector")
    Hs = restrict(hamiltonian, basis)
    if np.allclose(Hs.imag, 0):
        Hs = Hs.real
    evals, evecs = np.linalg.eigh(Hs)
    Ps = restrict(parity, basis).real if parity is not None else None
    S2 = restrict(s_squared, basis) if s_squared is not None else None
    if Ps is not None or S2 is not None:
        # a generic combination separates joint eigenspaces of commuting symmetries
        sym = np.zeros_like(Hs)
        if Ps is not None:
            sym = sym + Ps
        if S2 is not None:
            sym = sym + np.pi * (S2.real if np.isrealobj(Hs) else S2)
        for sl in _cluster_slices(evals, CLUSTER_TOL):
            if sl.stop - sl.start < 2:
                continue
            V = evecs[:, sl]
            block = V.conj().T @ sym @ V
            _, R = np.linalg.eigh(0.5 * (block + block.conj().T))
            evecs[:, sl] = V @ R
    evals, evecs = evals[:k], evecs[:, :k]
    resid = np.linalg.norm(Hs @ evecs - evecs * evals, axis=0)
    if np.any(resid > RESIDUAL_TOL):
        raise RuntimeError(f"eigenpair residual {resid.max():.2e} exceeds {RESIDUAL_TOL}")
    labels: list[int | None] = [None] * k
    if Ps is not None:
        pexp = np.real(np.einsum("ik,ij,jk->k", evecs.conj(), Ps, evecs))
        labels = [int(round(p)) if abs(abs(p) - 1) < 1e-8 else None for p in pexp]
    s2 = None
    if S2 is not None:
        s2 = np.real(np.einsum("ik,ij,jk->k", evecs.conj(), S2, evecs))
    return SpectrumResult(basis, evals, evecs, labels, s2, units)


def symmetry_subspace_dimension(basis: SectorBasis, symmetry, eigenvalue: float, tol: float = 1e-8) -> int:
    """Multiplicity of ``eigenvalue`` of a symmetry operator inside the sector."""
    M = restrict(symmetry, basis)
    w = np.linalg.eigvalsh(0.5 * (M + M.conj().T))
    return int(np.sum(np.abs(w - eigenvalue) < tol))


def orbital_rotation_matrix(basis: SectorBasis, W: np.ndarray) -> np.ndarray:
    """Matrix of the many-body operator induced by a one-body unitary ``W``.

    ``Gamma(W) a+_j Gamma(W)^-1 = sum_i W[i, j] a+_i``; the element between
    determinants ``I`` and ``J`` is ``det(W[I, J])``.  To re-express a state
    in orbitals ``phi_k = sum_i C[i, k] e_i`` (real orthogonal ``C``) use
    ``W = C.T``.
    """
    occ = [occupied(s, basis.n_modes) for s in basis.states]
    out = np.empty((basis.dim, basis.dim), dtype=np.result_type(W, float))
    for a, I in enumerate(occ):
        for b, J in enumerate(occ):
            out[a, b] = np.linalg.det(W[np.ix_(I, J)]) if I else 1.0
    return out


def support_size(vec: np.ndarray, tol: float = 1e-10) -> int:
    """Number of basis states carrying weight ``|c|^2`` above ``tol``."""
    return int(np.sum(np.abs(vec) ** 2 > tol))


def equal_superposition(result: SpectrumResult, i: int = 0, j: int = 1) -> np.ndarray:
    """Sector vector ``(v_i + v_j)/sqrt(2)``."""
    return (result.vectors[:, i] + result.vectors[:, j]) / np.sqrt(2)
