import itertools

import numpy as np
import pytest
import scipy.sparse as sp

from symadapt.operators import FermionOperator, fermion_to_sparse, number_operator
from symadapt.pools import gsd_pool, make_pool, s_squared_operator, sgsd_pool, ugsd_pool


def brute_force_pool_size(n, spin_conserving=False):
    """Count distinct generators a+a - h.c. and a+a+aa - h.c. by comparing matrices up to sign."""
    found = []

    def add(term):
        t = FermionOperator(n, {term: 1.0})
        M = fermion_to_sparse(t - t.dagger()).toarray()
        if not M.any():
            return
        if any(np.allclose(M, F) or np.allclose(M, -F) for F in found):
            return
        found.append(M)

    modes = range(n)
    for p, q in itertools.permutations(modes, 2):
        if not spin_conserving or p % 2 == q % 2:
            add(((p, 1), (q, 0)))
    for p, q, r, s in itertools.product(modes, repeat=4):
        if spin_conserving and (p % 2) + (q % 2) != (r % 2) + (s % 2):
            continue
        add(((p, 1), (q, 1), (r, 0), (s, 0)))
    return len(found)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_gsd_size_matches_brute_force(n):
    assert len(gsd_pool(n)) == brute_force_pool_size(n)


def test_pool_sizes():
    assert len(gsd_pool(8)) == 406
    assert len(ugsd_pool(2)) == brute_force_pool_size(4, spin_conserving=True)
    assert len(ugsd_pool(4)) == 162
    pool = sgsd_pool(4)
    assert len(pool) == 66
    assert sum(lab.startswith("s ") for lab in pool.labels) == 6


@pytest.mark.parametrize("kind,n", [("gsd", 6), ("ugsd", 6), ("sgsd", 6)])
def test_generators_are_anti_hermitian_and_conserve_number(kind, n):
    pool = make_pool(kind, n)
    N = fermion_to_sparse(number_operator(n))
    for A in pool.matrices():
        assert abs(A + A.conj().T).max() < 1e-12
        assert abs(N @ A - A @ N).max() < 1e-12


@pytest.mark.parametrize("kind", ["ugsd", "sgsd"])
def test_spin_adapted_pools_conserve_sz(kind):
    n = 6
    sz = fermion_to_sparse(sum(
        (FermionOperator.from_string(n, f"{p}^ {p}", 0.5 if p % 2 == 0 else -0.5) for p in range(n)),
        FermionOperator(n),
    ))
    for A in make_pool(kind, n).matrices():
        assert abs(sz @ A - A @ sz).max() < 1e-12


def test_singlet_pool_commutes_with_total_spin():
    s2 = fermion_to_sparse(s_squared_operator(4))
    worst = max(abs(s2 @ A - A @ s2).max() for A in sgsd_pool(4).matrices())
    assert worst < 1e-12


def test_singlet_pool_lies_in_commutant_of_unrestricted_pool():
    upool, pool = ugsd_pool(3), sgsd_pool(3)
    s2 = fermion_to_sparse(s_squared_operator(3))
    comms = [sp.csr_matrix(s2 @ A - A @ s2) for A in upool.matrices()]
    m = len(comms)
    gram = np.array([[np.real(comms[i].multiply(comms[j].conj()).sum()) for j in range(m)] for i in range(m)])
    w, V = np.linalg.eigh(gram)
    null = V[:, w < 1e-10 * np.abs(gram).max()]
    U = np.array([A.toarray().ravel() for A in upool.matrices()]).T
    S = np.array([A.toarray().ravel() for A in pool.matrices()]).T
    commutant = U @ null
    assert np.linalg.matrix_rank(S) == len(pool)
    assert np.linalg.matrix_rank(np.hstack([commutant, S])) == null.shape[1]
    # the global commutant additionally mixes singles with doubles from different
    # spatial index blocks, one such operator per singlet single
    n_singles = sum(lab.startswith("s ") for lab in pool.labels)
    assert null.shape[1] == len(pool) + n_singles


def test_s_squared_eigenvalues():
    s2 = fermion_to_sparse(s_squared_operator(2)).toarray()
    w = np.round(np.linalg.eigvalsh(s2), 10)
    assert set(w) == {0.0, 0.75, 2.0}
    # one triplet and three singlets in the two-electron sector of two orbitals
    assert np.sum(w == 2.0) == 3


def test_gsd_in_mirror_orbitals_has_definite_parity():
    # in g/u orbitals the reversal acts as (-1)^(number of odd-mode electrons)
    n = 6
    odd = np.array([sum((s >> (n - 1 - j)) & 1 for j in range(1, n, 2)) for s in range(2**n)])
    P = sp.diags((-1.0) ** odd)
    for A in gsd_pool(n).matrices():
        PA = P @ A @ P
        assert abs(PA - A).max() < 1e-12 or abs(PA + A).max() < 1e-12


def test_to_text_listing():
    text = gsd_pool(2).to_text()
    lines = text.splitlines()
    assert lines[0] == "# pool gsd n_modes=2 size=1"
    assert lines[1] == "0\t1^ 0"
    assert len(lines) == 4


def test_make_pool_errors():
    with pytest.raises(ValueError):
        make_pool("sgsd", 5)
    with pytest.raises(ValueError):
        make_pool("qubit", 4)
    with pytest.raises(ValueError):
        gsd_pool(1)
