import numpy as np
import pytest

from symadapt.fci import fci_solve, sector_basis
from symadapt.molecular import (
    ANGSTROM_TO_BOHR,
    BasisParseError,
    FCIDumpError,
    Geometry,
    SingularGeometryError,
    UnsupportedAngularMomentumError,
    boys0,
    compute_integrals,
    fcidump_read,
    fcidump_write,
    load_basis,
    lowdin_orthonormalize,
    parse_basis,
    read_xyz,
    spatial_to_spin_orbital,
)
from symadapt.scf import hf_solve, mp2_energy

# Reference values from an independent quantum chemistry package (STO-3G, angstrom).
H2_RHF_0P7414 = -1.1166843870853405
H4_REFERENCE = {
    0.9: dict(rhf=-2.1242597389728117, fci=-2.180316614323861, mp2=-0.035426629306187625),
    3.0: dict(rhf=-1.3133117862215051, fci=-1.867291372401375, mp2=-0.44510340555461936),
}


def orthonormal_chain(n, R):
    ao, S = compute_integrals(Geometry.linear_chain(n, R), load_basis("sto-3g"))
    return lowdin_orthonormalize(ao, S)[0]


def test_h2_restricted_energy():
    ints = orthonormal_chain(2, 0.7414)
    assert ints.e0 == pytest.approx(1 / (0.7414 * ANGSTROM_TO_BOHR))
    sol = hf_solve(ints, 2, "restricted")
    assert sol.e_total == pytest.approx(H2_RHF_0P7414, abs=1e-6)


@pytest.mark.parametrize("R", sorted(H4_REFERENCE))
def test_h4_energies(R):
    ref = H4_REFERENCE[R]
    ints = orthonormal_chain(4, R)
    sol = hf_solve(ints, 4, "restricted")
    assert sol.e_total == pytest.approx(ref["rhf"], abs=1e-6)
    assert mp2_energy(sol, ints) == pytest.approx(ref["mp2"], abs=1e-6)
    res = fci_solve(spatial_to_spin_orbital(ints), sector_basis(8, 4, n_alpha=2), k=1)
    assert res.ground_energy == pytest.approx(ref["fci"], abs=1e-6)


def test_overlap_is_normalized_and_symmetric():
    ao, S = compute_integrals(Geometry.linear_chain(3, 1.1), load_basis("sto-3g"))
    assert np.allclose(np.diag(S), 1.0)
    assert np.allclose(S, S.T)
    assert np.all(np.linalg.eigvalsh(S) > 0)
    g = ao.g
    assert np.allclose(g, g.transpose(1, 0, 2, 3))
    assert np.allclose(g, g.transpose(2, 3, 0, 1))


def test_coincident_atoms_rejected():
    geom = Geometry([("H", (0.0, 0.0, 0.0)), ("H", (0.0, 0.0, 0.0))])
    with pytest.raises(SingularGeometryError):
        compute_integrals(geom, load_basis("sto-3g"))
    with pytest.raises(ValueError):
        Geometry([("Xx", (0.0, 0.0, 0.0))])


def test_boys_function():
    assert boys0(0.0) == pytest.approx(1.0)
    assert boys0(1e-12) == pytest.approx(1.0)
    # large-argument asymptote sqrt(pi/t)/2
    assert boys0(50.0) == pytest.approx(0.5 * np.sqrt(np.pi / 50.0), rel=1e-12)
    # series value F0(t) ~ 1 - t/3 + t^2/10
    assert boys0(1e-3) == pytest.approx(1 - 1e-3 / 3 + 1e-6 / 10, rel=1e-10)


BASIS_TEXT = """
! comment
H     0
S    2   1.00
      3.42525091             0.15432897
      0.62391373             0.53532814
****
"""


def test_parse_basis_normalizes_contractions():
    shells = parse_basis(BASIS_TEXT)["H"]
    assert len(shells) == 1
    prims = shells[0].primitives
    self_overlap = sum(ci * cj * (np.pi / (ai + aj)) ** 1.5 for ai, ci in prims for aj, cj in prims)
    assert self_overlap == pytest.approx(1.0)


@pytest.mark.parametrize("text,exc", [
    ("", BasisParseError),
    ("H 0\nS 2 1.0\n 1.0 0.5\n", BasisParseError),
    ("H 0\nS x 1.0\n 1.0 0.5\n****\n", BasisParseError),
    ("H 0\nQ 1 1.0\n 1.0 0.5\n****\n", BasisParseError),
    ("H 0\nP 1 1.0\n 1.0 0.5\n****\n", UnsupportedAngularMomentumError),
    ("H 0\n****\n", BasisParseError),
])
def test_parse_basis_errors(text, exc):
    with pytest.raises(exc):
        parse_basis(text)


def test_read_xyz():
    geom = read_xyz("2\nhydrogen\nH 0 0 0\nh 0 0 0.74\n")
    assert geom.n_electrons == 2
    assert geom.atoms[1] == ("H", (0.0, 0.0, 0.74))
    with pytest.raises(ValueError):
        read_xyz("H 0 0\n")


def test_fcidump_roundtrip():
    ints = orthonormal_chain(4, 1.3)
    text = fcidump_write(ints)
    back = fcidump_read(text)
    assert back.nelec == 4 and back.ms2 == 0
    assert back.e0 == pytest.approx(ints.e0, abs=1e-15)
    assert np.allclose(back.h, ints.h, atol=1e-15)
    assert np.allclose(back.g, ints.g, atol=1e-15)


@pytest.mark.parametrize("text", [
    "no header here\n",
    " &FCI NELEC=2 &END\n",
    " &FCI NORB=2,NELEC=2 &END\n 1.0 1 1\n",
    " &FCI NORB=2,NELEC=2 &END\n 1.0 3 1 0 0\n",
    " &FCI NORB=2,NELEC=2 &END\n 1.0 1 0 1 0\n",
    " &FCI NORB=2,NELEC=2 &END\n abc 1 1 0 0\n",
])
def test_fcidump_errors(text):
    with pytest.raises(FCIDumpError):
        fcidump_read(text)


def test_fcidump_rejects_complex_integrals():
    ints = orthonormal_chain(2, 0.74)
    ints.h = ints.h.astype(complex)
    with pytest.raises(FCIDumpError):
        fcidump_write(ints)
