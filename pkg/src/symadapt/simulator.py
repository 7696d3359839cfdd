"""Exact statevector simulation of exponential ansatze.

A statevector is a complex numpy array of length ``2**n``; qubit 0 is the
leftmost bitstring character and the most significant index bit.  Public
functions work on the full space with sparse matrices and scaled Taylor
exponentials.  :class:`SubspaceEngine` is the fast path used inside ADAPT
loops: it restricts everything to the coordinate subspace reachable from the
reference and exponentiates through cached eigendecompositions.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fci import orbital_rotation_matrix, sector_basis
from .operators import FermionOperator, PauliOperator, fermion_to_sparse
from .scf import salc_coefficients

NORM_TOL = 1e-12


class ReferenceSpecError(ValueError):
    pass


def _as_sparse(op) -> sp.csr_matrix:
    if isinstance(op, PauliOperator):
        return op.to_sparse()
    if isinstance(op, FermionOperator):
        return fermion_to_sparse(op)
    return sp.csr_matrix(op)


def basis_state(bits: str) -> np.ndarray:
    psi = np.zeros(1 << len(bits), dtype=complex)
    psi[int(bits, 2)] = 1.0
    return psi


def _salc_cat_plus(n_qubits: int) -> np.ndarray:
    neel = "10" * (n_qubits // 2)
    anti = "01" * (n_qubits // 2)
    basis = sector_basis(n_qubits, n_qubits // 2)
    cat = np.zeros(basis.dim)
    cat[basis.index(neel)] = cat[basis.index(anti)] = 1 / np.sqrt(2)
    vec = orbital_rotation_matrix(basis, salc_coefficients(n_qubits).T) @ cat
    psi = np.zeros(1 << n_qubits, dtype=complex)
    psi[list(basis.states)] = vec
    return psi


def prepare_reference(spec, n_qubits: int, n_particles: int | None = None) -> np.ndarray:
    """Reference statevector.

    ``spec`` is one of ``"hf"`` (lowest ``n_particles`` modes occupied,
    default half filling), ``"neel"``, ``"cat_plus"``, ``"salc_cat_plus"``,
    an explicit bitstring such as ``"11110000"``, or a mapping from
    bitstrings to amplitudes (normalized here).
    """
    if isinstance(spec, Mapping):
        psi = np.zeros(1 << n_qubits, dtype=complex)
        for bits, amp in spec.items():
            if len(bits) != n_qubits or set(bits) - {"0", "1"}:
                raise ReferenceSpecError(f"bad bitstring {bits!r} for {n_qubits} qubits")
            psi[int(bits, 2)] += amp
        norm = np.linalg.norm(psi)
        if norm < 1e-14:
            raise ReferenceSpecError("superposition has zero norm")
        return psi / norm
    if not isinstance(spec, str):
        raise ReferenceSpecError(f"unsupported reference spec {spec!r}")
    if spec == "hf":
        n = n_qubits // 2 if n_particles is None else n_particles
        if not 0 <= n <= n_qubits:
            raise ReferenceSpecError("particle number out of range")
        return basis_state("1" * n + "0" * (n_qubits - n))
    if spec in ("neel", "cat_plus", "salc_cat_plus") and n_qubits % 2:
        raise ReferenceSpecError(f"{spec} needs an even number of qubits")
    if spec == "neel":
        return basis_state("10" * (n_qubits // 2))
    if spec == "cat_plus":
        return (basis_state("10" * (n_qubits // 2)) + basis_state("01" * (n_qubits // 2))) / np.sqrt(2)
    if spec == "salc_cat_plus":
        return _salc_cat_plus(n_qubits)
    if len(spec) == n_qubits and not set(spec) - {"0", "1"}:
        return basis_state(spec)
    raise ReferenceSpecError(f"malformed reference spec {spec!r}")


def check_anti_hermitian(A: sp.spmatrix, atol: float = 1e-10) -> None:
    resid = sp.csr_matrix(A + A.conj().T)
    if resid.nnz and abs(resid).max() > atol:
        raise ValueError("generator is not anti-Hermitian")


def apply_exponential(A, theta: float, psi: np.ndarray, check: bool = True) -> np.ndarray:
    """``exp(theta * A) @ psi`` for anti-Hermitian ``A`` (scaled Taylor series)."""
    if isinstance(A, PauliOperator):
        if check and not A.is_anti_hermitian():
            raise ValueError("generator is not anti-Hermitian")
        A = A.to_sparse()
    else:
        A = _as_sparse(A)
        if check:
            check_anti_hermitian(A)
    if theta == 0.0:
        return np.array(psi, dtype=complex)
    out = spla.expm_multiply(theta * A, np.asarray(psi, dtype=complex))
    return out / np.linalg.norm(out) * np.linalg.norm(psi)


def expectation(O, psi: np.ndarray, atol: float = 1e-10) -> float:
    if isinstance(O, PauliOperator):
        if not O.is_hermitian():
            raise ValueError("observable is not Hermitian")
        O = O.to_sparse()
    else:
        O = _as_sparse(O)
    val = np.vdot(psi, O @ psi)
    if abs(val.imag) > atol:
        raise ValueError(f"expectation has imaginary part {val.imag:.3e}; operator not Hermitian")
    return float(val.real)


def infidelity(psi: np.ndarray, exact: np.ndarray) -> float:
    """``1 - |<exact|psi>|^2`` for normalized states."""
    return float(max(0.0, 1.0 - abs(np.vdot(exact, psi)) ** 2))


@dataclass
class AnsatzChain:
    """``exp(t_L A_L) ... exp(t_1 A_1) |ref>`` with generators drawn from a pool."""

    reference: np.ndarray
    generators: list = field(default_factory=list)
    params: np.ndarray = field(default_factory=lambda: np.zeros(0))
    ids: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.params = np.asarray(self.params, dtype=float)
        if len(self.generators) != len(self.params):
            raise ValueError("generator and parameter counts differ")

    def __len__(self) -> int:
        return len(self.generators)

    def state(self, params: np.ndarray | None = None) -> np.ndarray:
        theta = self.params if params is None else params
        psi = np.array(self.reference, dtype=complex)
        for A, t in zip(self.generators, theta):
            psi = apply_exponential(A, t, psi)
        return psi


def ansatz_energy(chain: AnsatzChain, H, params: np.ndarray | None = None) -> float:
    return expectation(_as_sparse(H), chain.state(params))


def ansatz_gradient(chain: AnsatzChain, H, params: np.ndarray | None = None) -> np.ndarray:
    """Exact ``dE/dtheta_k`` for all ``k`` by one forward and one adjoint sweep."""
    theta = chain.params if params is None else np.asarray(params, float)
    H = _as_sparse(H)
    gens = [_as_sparse(A) for A in chain.generators]
    psi = chain.state(theta)
    lam = H @ psi
    grad = np.zeros(len(gens))
    for k in range(len(gens) - 1, -1, -1):
        grad[k] = 2.0 * np.real(np.vdot(lam, gens[k] @ psi))
        psi = apply_exponential(gens[k], -theta[k], psi, check=False)
        lam = apply_exponential(gens[k], -theta[k], lam, check=False)
    return grad


def pool_gradients(psi: np.ndarray, H, pool_matrices: Sequence) -> np.ndarray:
    """``<psi|[H, A_k]|psi> = 2 Re <H psi|A_k psi>`` for each pool generator."""
    hpsi = _as_sparse(H) @ psi
    return np.array([2.0 * np.real(np.vdot(hpsi, _as_sparse(A) @ psi)) for A in pool_matrices])


def reachable_support(reference: np.ndarray, operators: Sequence[sp.spmatrix], tol: float = 1e-14) -> np.ndarray:
    """Smallest coordinate set containing the reference support and closed under ``operators``."""
    pattern = None
    for M in operators:
        P = (abs(sp.csr_matrix(M)) > tol).astype(np.int8)
        pattern = P if pattern is None else ((pattern + P) > 0).astype(np.int8)
    mask = np.abs(reference) > tol
    if pattern is None:
        return np.where(mask)[0]
    pattern = sp.csr_matrix(pattern)
    while True:
        grown = mask | (pattern @ mask.astype(np.int8) > 0)
        if np.array_equal(grown, mask):
            return np.where(mask)[0]
        mask = grown


class SubspaceEngine:
    """Dense simulation restricted to the subspace reachable from ``reference``.

    ``H``, the pool generators and any observables are projected onto the
    coordinates reachable by ``H`` and the generators, which is exact for all
    states of the form ``exp(...)...|ref>``.  Exponentials of pool generators
    use cached eigendecompositions ``i A = V diag(w) V^+``.
    """

    def __init__(self, H, pool_matrices: Sequence, reference: np.ndarray):
        Hs = _as_sparse(H)
        mats = [_as_sparse(A) for A in pool_matrices]
        self.n_full = Hs.shape[0]
        self.support = reachable_support(reference, [Hs, *mats])
        idx = self.support
        self.H = Hs[idx][:, idx].toarray()
        self.pool = np.stack([M[idx][:, idx].toarray() for M in mats]) if mats else np.zeros((0, len(idx), len(idx)))
        if np.allclose(self.pool.imag, 0) and np.allclose(self.H.imag, 0):
            self.pool, self.H = self.pool.real, self.H.real
        self.reference = np.asarray(reference, dtype=complex)[idx]
        self._eig: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    @property
    def dim(self) -> int:
        return len(self.support)

    def restrict(self, O) -> np.ndarray:
        M = _as_sparse(O)
        return M[self.support][:, self.support].toarray()

    def restrict_state(self, psi: np.ndarray) -> np.ndarray:
        return np.asarray(psi)[self.support]

    def embed(self, v: np.ndarray) -> np.ndarray:
        psi = np.zeros(self.n_full, dtype=complex)
        psi[self.support] = v
        return psi

    def _decomp(self, k: int):
        if k not in self._eig:
            w, V = np.linalg.eigh(1j * self.pool[k])
            self._eig[k] = (w, V)
        return self._eig[k]

    def exp_apply(self, k: int, theta: float, v: np.ndarray) -> np.ndarray:
        w, V = self._decomp(k)
        return V @ (np.exp(-1j * theta * w) * (V.conj().T @ v))

    def state(self, ids: Sequence[int], theta: Sequence[float]) -> np.ndarray:
        v = self.reference.astype(complex)
        for k, t in zip(ids, theta):
            v = self.exp_apply(k, t, v)
        return v

    def energy(self, ids, theta) -> float:
        v = self.state(ids, theta)
        return float(np.real(np.vdot(v, self.H @ v)))

    def energy_and_gradient(self, ids: Sequence[int], theta: np.ndarray) -> tuple[float, np.ndarray]:
        v = self.state(ids, theta)
        lam = self.H @ v
        energy = float(np.real(np.vdot(v, lam)))
        grad = np.zeros(len(ids))
        for pos in range(len(ids) - 1, -1, -1):
            k = ids[pos]
            grad[pos] = 2.0 * np.real(np.vdot(lam, self.pool[k] @ v))
            v = self.exp_apply(k, -theta[pos], v)
            lam = self.exp_apply(k, -theta[pos], lam)
        return energy, grad

    def pool_gradients(self, v: np.ndarray) -> np.ndarray:
        hv = self.H @ v
        return 2.0 * np.real(np.einsum("i,kij,j->k", hv.conj(), self.pool, v, optimize=True))

    def expectation(self, O_sub: np.ndarray, v: np.ndarray) -> float:
        return float(np.real(np.vdot(v, O_sub @ v)))
