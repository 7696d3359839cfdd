import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symadapt.operators import (
    FermionOperator,
    IntegralSet,
    PauliOperator,
    commutator,
    dumps_operator,
    fermion_to_sparse,
    integrals_to_fermion_op,
    jordan_wigner,
    loads_operator,
    normal_order,
    rotate_integrals,
)

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0, -1.0]).astype(complex)
I2 = np.eye(2)
LETTERS = {"I": I2, "X": X, "Y": Y, "Z": Z}


def kron_label(label):
    out = np.ones((1, 1))
    for ch in label:
        out = np.kron(out, LETTERS[ch])
    return out


def brute_ladder(n, j, dagger):
    """Dense Jordan-Wigner ladder operator built from explicit Kronecker products."""
    lower = np.array([[0, 1], [0, 0]], dtype=complex)  # |0><1|, |1> occupied
    op = lower.T if dagger else lower
    mats = [Z] * j + [op] + [I2] * (n - j - 1)
    out = np.ones((1, 1))
    for m in mats:
        out = np.kron(out, m)
    return out


def brute_fermion(op: FermionOperator):
    n = op.n_modes
    out = np.zeros((2**n, 2**n), dtype=complex)
    for term, c in op.terms.items():
        m = np.eye(2**n, dtype=complex)
        for mode, dag in term:
            m = m @ brute_ladder(n, mode, dag)
        out += c * m
    return out


labels = st.integers(1, 4).flatmap(lambda n: st.lists(st.text("IXYZ", min_size=n, max_size=n), min_size=1, max_size=4))


@settings(max_examples=60, deadline=None)
@given(labels, st.lists(st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False), min_size=8, max_size=8))
def test_pauli_product_matches_dense(labs, coeffs):
    n = len(labs[0])
    a = PauliOperator(n, {lab: c for lab, c in zip(labs, coeffs)})
    b = PauliOperator(n, {lab[::-1]: c for lab, c in zip(labs, coeffs[4:])})
    dense_a = sum(c * kron_label(lab) for lab, c in a.terms.items()) if len(a) else np.zeros((2**n,) * 2)
    assert np.allclose(a.to_dense(), dense_a)
    assert np.allclose((a * b).to_dense(), a.to_dense() @ b.to_dense())
    assert np.allclose(commutator(a, b).to_dense(), a.to_dense() @ b.to_dense() - b.to_dense() @ a.to_dense())


def test_pauli_label_roundtrip_and_identity():
    op = PauliOperator(3, {"XZI": 0.5, "IIY": -1j})
    assert op.terms == {"XZI": 0.5, "IIY": -1j}
    assert (op * PauliOperator.identity(3)) == op
    assert PauliOperator(2, {"XX": 1}) * PauliOperator(2, {"YY": 1}) == PauliOperator(2, {"ZZ": -1})


def test_commutator_qubit_mismatch():
    with pytest.raises(ValueError):
        commutator(PauliOperator(2, {"XX": 1}), PauliOperator(3, {"XXX": 1}))


def test_label_length_checked():
    with pytest.raises(ValueError):
        PauliOperator(2, {"XYZ": 1.0})


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_jw_matches_kronecker_ladders(n):
    for j in range(n):
        for dag in (0, 1):
            op = FermionOperator(n, {((j, dag),): 1.0})
            assert np.allclose(fermion_to_sparse(op).toarray(), brute_ladder(n, j, dag))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_jw_anticommutation(n):
    a = [fermion_to_sparse(FermionOperator(n, {((j, 0),): 1.0})).toarray() for j in range(n)]
    for i in range(n):
        for j in range(n):
            ad = a[j].conj().T
            assert np.allclose(a[i] @ ad + ad @ a[i], np.eye(2**n) * (i == j))
            assert np.allclose(a[i] @ a[j] + a[j] @ a[i], 0)


def test_jw_examples():
    # a+_0 on two modes
    op = jordan_wigner(FermionOperator.from_string(2, "0^"))
    assert op.isclose(PauliOperator(2, {"XI": 0.5, "YI": -0.5j}))
    # number operator
    n1 = jordan_wigner(FermionOperator.from_string(3, "1^ 1"))
    assert n1.isclose(PauliOperator(3, {"III": 0.5, "IZI": -0.5}))
    # occupied mode 0 is the leftmost bit
    psi = fermion_to_sparse(FermionOperator.from_string(3, "0^")) @ np.eye(8)[0]
    assert psi[0b100] == pytest.approx(1.0)


terms = st.lists(
    st.tuples(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 1)), max_size=4),
              st.floats(-2, 2, allow_nan=False)),
    min_size=1, max_size=3,
)


@settings(max_examples=60, deadline=None)
@given(terms, terms)
def test_jw_is_homomorphism(t1, t2):
    a = FermionOperator(4, {tuple(t): c for t, c in t1})
    b = FermionOperator(4, {tuple(t): c for t, c in t2})
    A, B = fermion_to_sparse(a).toarray(), fermion_to_sparse(b).toarray()
    assert np.allclose(fermion_to_sparse(a * b).toarray(), A @ B)
    assert np.allclose(fermion_to_sparse(a + b).toarray(), A + B)
    assert np.allclose(fermion_to_sparse(a.dagger()).toarray(), A.conj().T)
    assert np.allclose(A, brute_fermion(a))


def test_normal_ordering():
    op = FermionOperator.from_string(3, "0 0^")
    assert op == FermionOperator.identity(3) - FermionOperator.from_string(3, "0^ 0")
    assert FermionOperator.from_string(3, "1^ 1^").is_zero()
    swapped = FermionOperator.from_string(4, "1^ 3^ 0 2")
    assert list(swapped.terms) == [((3, 1), (1, 1), (2, 0), (0, 0))]
    assert swapped.terms[((3, 1), (1, 1), (2, 0), (0, 0))] == 1.0
    assert normal_order(normal_order(swapped)) == swapped


def test_invalid_mode_rejected():
    with pytest.raises(ValueError):
        FermionOperator(2, {((2, 1),): 1.0})


def test_serialization_roundtrip():
    f = FermionOperator.from_string(4, "3^ 1", 0.25 + 1j) + FermionOperator.identity(4, -2.0)
    assert loads_operator(dumps_operator(f)) == f
    p = jordan_wigner(f)
    assert loads_operator(dumps_operator(p)).isclose(p, 1e-15)
    with pytest.raises(ValueError):
        loads_operator("1.0 0.0 XX\n")


def random_integrals(n, rng, flavor="spinless"):
    h = rng.normal(size=(n, n))
    h = h + h.T
    g = rng.normal(size=(n, n, n, n))
    g = g + g.transpose(2, 3, 0, 1)
    g = g + g.transpose(1, 0, 3, 2)
    if flavor == "spatial":
        g = g + g.transpose(1, 0, 2, 3) + g.transpose(0, 1, 3, 2) + g.transpose(1, 0, 3, 2)
    return IntegralSet(n, 0.3, h, g, flavor)


def test_integral_hamiltonian_matches_brute_force():
    rng = np.random.default_rng(3)
    ints = random_integrals(3, rng)
    H = fermion_to_sparse(integrals_to_fermion_op(ints)).toarray()
    a = [brute_ladder(3, j, 0) for j in range(3)]
    ref = 0.3 * np.eye(8, dtype=complex)
    for p in range(3):
        for q in range(3):
            ref += ints.h[p, q] * a[p].conj().T @ a[q]
            for r in range(3):
                for s in range(3):
                    ref += 0.5 * ints.g[p, r, q, s] * a[p].conj().T @ a[q].conj().T @ a[s] @ a[r]
    assert np.allclose(H, ref)


def test_rotation_preserves_spectrum_in_each_sector():
    rng = np.random.default_rng(5)
    ints = random_integrals(4, rng)
    C, _ = np.linalg.qr(rng.normal(size=(4, 4)))
    rot = rotate_integrals(ints, C)
    e1 = np.linalg.eigvalsh(fermion_to_sparse(integrals_to_fermion_op(ints)).toarray())
    e2 = np.linalg.eigvalsh(fermion_to_sparse(integrals_to_fermion_op(rot)).toarray())
    assert np.allclose(e1, e2)
    with pytest.raises(ValueError):
        rotate_integrals(ints, C * 1.1)


def test_integral_symmetry_validation():
    with pytest.raises(ValueError):
        IntegralSet(2, 0.0, np.array([[0, 1], [0, 0.0]]), np.zeros((2, 2, 2, 2)), "spinless")
    g = np.zeros((2, 2, 2, 2))
    g[0, 0, 1, 1] = 1.0
    with pytest.raises(ValueError):
        IntegralSet(2, 0.0, np.zeros((2, 2)), g, "spinless")
