import math

import numpy as np
import pytest

from symadapt.fci import (
    embed_to_statevector,
    equal_superposition,
    fci_solve,
    orbital_rotation_matrix,
    project,
    restrict,
    sector_basis,
    support_size,
    symmetry_subspace_dimension,
)
from symadapt.lattice import XXZSpec, parity_operator, site_reversal, xxz_fermion_integrals, xxz_spin_hamiltonian
from symadapt.operators import FermionOperator, fermion_to_sparse, integrals_to_fermion_op
from symadapt.scf import salc_coefficients
from symadapt.simulator import infidelity, prepare_reference


@pytest.mark.parametrize("n,N,na,dim", [(8, 4, None, 70), (8, 4, 2, 36), (8, 2, 1, 16), (4, 0, None, 1), (6, 3, None, 20)])
def test_sector_dimensions(n, N, na, dim):
    assert sector_basis(n, N, na).dim == dim == len(sector_basis(n, N, na).bitstrings)


def test_sector_basis_errors_and_vacuum():
    with pytest.raises(ValueError):
        sector_basis(4, 5)
    with pytest.raises(ValueError):
        sector_basis(4, 3, n_alpha=0)
    with pytest.raises(ValueError):
        sector_basis(5, 2, n_alpha=1)
    vac = sector_basis(2, 0)
    assert vac.bitstrings == ["00"]


def test_spin_and_fermion_hamiltonians_agree():
    for kj in (0.3, 1.0, 4.0):
        spec = XXZSpec.from_ratio(kj)
        Hs = xxz_spin_hamiltonian(spec).to_sparse().toarray()
        Hf = fermion_to_sparse(integrals_to_fermion_op(xxz_fermion_integrals(spec))).toarray()
        assert np.allclose(Hs, Hf, atol=1e-12)


def test_free_fermion_limit():
    # K = 0 leaves only hopping: ground energy is the sum of the lowest N orbital energies
    spec = XXZSpec(n_sites=8, J=-1.0, K=0.0)
    ints = xxz_fermion_integrals(spec)
    eps = np.linalg.eigvalsh(ints.h)
    res = fci_solve(ints, sector_basis(8, 4), k=2)
    assert res.ground_energy == pytest.approx(eps[:4].sum(), abs=1e-10)
    assert res.gap == pytest.approx(eps[4] - eps[3], abs=1e-10)


def test_periodic_fermionization_not_supported():
    with pytest.raises(NotImplementedError):
        xxz_fermion_integrals(XXZSpec(boundary="periodic"))
    assert len(XXZSpec(n_sites=4, boundary="periodic").bonds) == 4
    with pytest.raises(ValueError):
        XXZSpec(n_sites=1)


def test_parity_operator_is_a_one_body_rotation():
    n = 6
    P = parity_operator(n)
    R = site_reversal(n)
    assert np.allclose((P @ P).toarray(), np.eye(2**n))
    for N in range(n + 1):
        basis = sector_basis(n, N)
        assert np.allclose(restrict(P, basis), orbital_rotation_matrix(basis, R))
    # P a+_i P^-1 = a+_{n-1-i}
    for i in range(n):
        a = fermion_to_sparse(FermionOperator.from_string(n, f"{i}^"))
        b = fermion_to_sparse(FermionOperator.from_string(n, f"{n - 1 - i}^"))
        assert np.allclose((P @ a @ P.T).toarray(), b.toarray())


def test_parity_labels_and_symmetry_dimensions():
    basis = sector_basis(8, 4)
    P = parity_operator(8)
    assert symmetry_subspace_dimension(basis, P, 1.0) == 38
    assert symmetry_subspace_dimension(basis, P, -1.0) == 32
    res = fci_solve(xxz_spin_hamiltonian(XXZSpec.from_ratio(1.0)), basis, parity=P, units="|J|")
    assert res.parity[:2] == [1, -1]
    assert all(p in (1, -1) for p in res.parity)
    assert sum(p == 1 for p in res.parity) == 38


def test_gap_closes_with_anisotropy():
    gaps = []
    for kj in (1.0, 10.0, 100.0):
        res = fci_solve(xxz_spin_hamiltonian(XXZSpec.from_ratio(kj)), sector_basis(8, 4), k=2)
        gaps.append(res.gap)
    assert gaps[0] > gaps[1] > gaps[2] > 0


def test_embed_project_roundtrip():
    basis = sector_basis(6, 3)
    rng = np.random.default_rng(0)
    v = rng.normal(size=basis.dim)
    psi = embed_to_statevector(basis, v)
    assert np.allclose(project(basis, psi), v)
    assert np.linalg.norm(psi) == pytest.approx(np.linalg.norm(v))
    assert support_size(v / np.linalg.norm(v)) == basis.dim


def test_salc_cat_plus_matches_creation_operator_expansion():
    n = 8
    C = salc_coefficients(n)
    assert np.allclose(C.T @ C, np.eye(n))
    # a+_site = sum_k C[site, k] b+_k, applied in ascending site order
    vac = np.zeros(2**n)
    vac[0] = 1.0
    cat = np.zeros(2**n, dtype=complex)
    for pattern in ("10" * 4, "01" * 4):
        state = vac.astype(complex)
        for site in reversed([i for i, b in enumerate(pattern) if b == "1"]):
            op = sum((FermionOperator.from_string(n, f"{k}^", C[site, k]) for k in range(n) if C[site, k]),
                     FermionOperator(n))
            state = fermion_to_sparse(op) @ state
        cat += state / math.sqrt(2)
    assert np.allclose(prepare_reference("salc_cat_plus", n), cat)


def test_salc_cat_plus_frozen_amplitudes():
    psi = prepare_reference("salc_cat_plus", 8)
    expected = {
        "01010101": 1, "01011010": -1, "01100110": 1, "01101001": -1,
        "10010110": -1, "10011001": 1, "10100101": -1, "10101010": 1,
    }
    ref = np.zeros(256)
    for bits, s in expected.items():
        ref[int(bits, 2)] = s / math.sqrt(8)
    assert np.allclose(psi, ref)


@pytest.mark.parametrize("kj", [1.0, 10.0])
def test_equal_superposition_error_and_infidelity(kj):
    res = fci_solve(xxz_spin_hamiltonian(XXZSpec.from_ratio(kj)), sector_basis(8, 4), k=2)
    H = restrict(xxz_spin_hamiltonian(XXZSpec.from_ratio(kj)), res.basis)
    v = equal_superposition(res)
    e = float(np.real(v.conj() @ H @ v))
    assert e - res.ground_energy == pytest.approx(res.gap / 2, abs=1e-12)
    assert infidelity(v, res.vectors[:, 0]) == pytest.approx(0.5, abs=1e-12)


def test_spectrum_csv():
    res = fci_solve(xxz_spin_hamiltonian(XXZSpec.from_ratio(1.0)), sector_basis(8, 4), k=3,
                    parity=parity_operator(8), units="|J|")
    lines = res.to_csv().splitlines()
    assert lines[0] == "# energy units: |J|"
    assert lines[1] == "index,energy,parity,s_squared"
    assert len(lines) == 5
    assert float(lines[2].split(",")[1]) == pytest.approx(res.ground_energy, abs=1e-13)
    assert lines[2].split(",")[2] == "1"
    with pytest.raises(ValueError):
        fci_solve(xxz_spin_hamiltonian(XXZSpec.from_ratio(1.0)), sector_basis(8, 4), k=0)
