"""Ready-made problems: the XXZ chain and linear H4 under each setting."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .adapt import AdaptProblem
from .fci import SectorBasis, SpectrumResult, fci_solve, orbital_rotation_matrix, sector_basis, support_size
from .lattice import XXZSpec, site_reversal, xxz_fermion_integrals
from .molecular import Geometry, compute_integrals, load_basis, lowdin_orthonormalize, spatial_to_spin_orbital
from .operators import IntegralSet, fermion_to_sparse, integrals_to_fermion_op, rotate_integrals
from .pools import make_pool, s_squared_operator
from .scf import (
    HFSolution,
    SCFOptions,
    determinant_symmetry_overlap,
    follow_instability,
    hf_solve,
    mp2_energy,
    salc_coefficients,
    stability_analysis,
)
from .simulator import prepare_reference

log = logging.getLogger(__name__)

HEISENBERG_SETTINGS = ("HF", "BS-HF", "local-neel", "local-cat+", "salc-cat+")
H4_SETTINGS = ("rHF/sGSD", "rHF/uGSD", "uHF/uGSD")
CONTINUATION_START = 0.5


@dataclass
class PreparedProblem:
    problem: AdaptProblem
    spectrum: SpectrumResult
    summary: dict = field(default_factory=dict)


def sector_operator_to_full(basis: SectorBasis, M: np.ndarray) -> sp.csr_matrix:
    """Embed a sector-block matrix into the full Fock space (zero elsewhere)."""
    idx = np.array(basis.states, dtype=np.int64)
    coo = sp.coo_matrix(M)
    dim = 1 << basis.n_modes
    return sp.csr_matrix((coo.data, (idx[coo.row], idx[coo.col])), shape=(dim, dim))


# --------------------------------------------------------------------------
# XXZ chain
# --------------------------------------------------------------------------


def _is_parity_determinant(sol: HFSolution, R: np.ndarray, tol: float = 1e-6) -> bool:
    C = sol.coeffs[0][:, : sol.n_occ[0]]
    return abs(abs(determinant_symmetry_overlap(C, R)) - 1.0) < tol


def heisenberg_hf(k_over_j: float, n_sites: int = 8, options: SCFOptions | None = None) -> HFSolution:
    """Parity-preserving spinless HF at half filling.

    Converges at ``K/J = 0.5`` from the core guess and walks geometrically to
    the target, seeding each step with the previous orbitals so the solver
    stays on the symmetric branch past its instability.  If the result is not
    a parity eigenstate the parity-projected density iteration is used.
    """
    R = site_reversal(n_sites)
    n = n_sites // 2
    steps = max(2, math.ceil(abs(math.log10(k_over_j / CONTINUATION_START)) * 10) + 1)
    path = np.geomspace(CONTINUATION_START, k_over_j, steps)
    guess = "core"
    sol = None
    for kj in path:
        ints = xxz_fermion_integrals(XXZSpec.from_ratio(float(kj), n_sites))
        sol = hf_solve(ints, n, "spinless", guess=guess, options=options)
        guess = sol
    if not _is_parity_determinant(sol, R):
        sol = hf_solve(ints, n, "spinless", guess="core", options=options, symmetrize=R)
        sol.notes.append("symmetric branch obtained with parity projection")
    return sol


def heisenberg_broken_symmetry_hf(k_over_j: float, preserved: HFSolution, n_sites: int = 8,
                                  options: SCFOptions | None = None) -> tuple[HFSolution, float]:
    """Follow the lowest Hessian mode from the symmetric solution when unstable.

    Returns the solution and the stability eigenvalue of the symmetric one.
    """
    ints = xxz_fermion_integrals(XXZSpec.from_ratio(k_over_j, n_sites))
    lowest, direction = stability_analysis(preserved, ints)
    if lowest >= -1e-8:
        return preserved, lowest
    return follow_instability(preserved, ints, direction, options=options), lowest


def prepare_heisenberg(k_over_j: float, setting: str, n_sites: int = 8, pool_kind: str = "gsd") -> PreparedProblem:
    if setting not in HEISENBERG_SETTINGS:
        raise ValueError(f"unknown Heisenberg setting {setting!r}; choose from {HEISENBERG_SETTINGS}")
    spec = XXZSpec.from_ratio(k_over_j, n_sites)
    site_ints = xxz_fermion_integrals(spec)
    basis = sector_basis(n_sites, n_sites // 2)
    R = site_reversal(n_sites)
    summary: dict = {"system": "xxz", "k_over_j": k_over_j, "setting": setting, "n_sites": n_sites}

    preserved = heisenberg_hf(k_over_j, n_sites)
    summary["hf_energy"] = preserved.e_total
    summary["hf_notes"] = list(preserved.notes)
    try:
        summary["mp2_energy"] = preserved.e_total + mp2_energy(preserved, site_ints)
    except ZeroDivisionError as exc:
        summary["mp2_energy"] = None
        summary["mp2_error"] = str(exc)

    if setting in ("HF", "BS-HF"):
        if setting == "BS-HF":
            sol, lowest = heisenberg_broken_symmetry_hf(k_over_j, preserved, n_sites)
            summary["stability_eigenvalue"] = lowest
            summary["bs_hf_energy"] = sol.e_total
            summary["bs_hf_notes"] = list(sol.notes)
        else:
            sol = preserved
        C = sol.coeffs[0]
        ref_spec = "hf"
    elif setting == "salc-cat+":
        C = salc_coefficients(n_sites)
        ref_spec = "salc_cat_plus"
    else:
        C = np.eye(n_sites)
        ref_spec = "neel" if setting == "local-neel" else "cat_plus"

    ints = rotate_integrals(site_ints, C)
    parity_sector = orbital_rotation_matrix(basis, C.T @ R @ C)
    parity_full = sector_operator_to_full(basis, parity_sector)
    spectrum = fci_solve(ints, basis, parity=parity_full, units="|J|")
    reference = prepare_reference(ref_spec, n_sites, n_sites // 2)
    summary.update(fci_energy=spectrum.ground_energy, fci_gap=spectrum.gap, fci_parity=spectrum.parity[:2])
    problem = AdaptProblem(
        hamiltonian=fermion_to_sparse_ints(ints),
        reference=reference,
        pool=make_pool(pool_kind, n_sites),
        exact_energy=spectrum.ground_energy,
        exact_state=spectrum.state(0),
        observables={"parity": parity_full},
        units="|J|",
        name=f"xxz K/J={k_over_j:g} {setting}",
    )
    return PreparedProblem(problem, spectrum, summary)


def fermion_to_sparse_ints(ints: IntegralSet) -> sp.csr_matrix:
    return fermion_to_sparse(integrals_to_fermion_op(ints))


# --------------------------------------------------------------------------
# H4 chain
# --------------------------------------------------------------------------


@dataclass
class H4MeanField:
    ints: IntegralSet
    rhf: HFSolution
    uhf: HFSolution
    rhf_stability: float


def h4_mean_field(bond_length: float, options: SCFOptions | None = None) -> H4MeanField:
    """Orthonormalized STO-3G integrals plus restricted and unrestricted HF.

    The unrestricted solution is found by following the restricted
    solution's lowest Hessian mode; it equals the restricted one when stable.
    """
    geom = Geometry.linear_chain(4, bond_length)
    ao, S = compute_integrals(geom, load_basis("sto-3g"))
    ints, _ = lowdin_orthonormalize(ao, S)
    rhf = hf_solve(ints, 4, "restricted", options=options)
    lowest, direction = stability_analysis(rhf, ints)
    if lowest < -1e-8:
        uhf = follow_instability(rhf, ints, direction, options=options)
        if uhf.mode == "restricted":
            uhf = hf_solve(ints, (2, 2), "unrestricted", guess=uhf.coeffs, options=options)
    else:
        uhf = hf_solve(ints, (2, 2), "unrestricted", guess=[rhf.coeffs[0], rhf.coeffs[0]], options=options)
    return H4MeanField(ints, rhf, uhf, lowest)


def spin_orbital_coefficients(sol: HFSolution) -> np.ndarray:
    Ca, Cb = (sol.coeffs[0], sol.coeffs[0]) if len(sol.coeffs) == 1 else sol.coeffs
    n = Ca.shape[0]
    C = np.zeros((2 * n, 2 * n))
    C[0::2, 0::2] = Ca
    C[1::2, 1::2] = Cb
    return C


def mo_spin_orbital_integrals(ints: IntegralSet, sol: HFSolution) -> IntegralSet:
    return rotate_integrals(spatial_to_spin_orbital(ints), spin_orbital_coefficients(sol))


def uhf_s_squared(sol: HFSolution) -> float:
    """``<S^2>`` of an unrestricted determinant."""
    Ca, Cb = (sol.coeffs[0], sol.coeffs[0]) if len(sol.coeffs) == 1 else sol.coeffs
    na, nb = (sol.n_occ[0],) * 2 if len(sol.n_occ) == 1 else sol.n_occ
    ov = Ca[:, :na].T @ Cb[:, :nb]
    sz = 0.5 * (na - nb)
    return float(sz * (sz + 1) + nb - np.sum(ov**2))


def prepare_h4(bond_length: float, setting: str, mean_field: H4MeanField | None = None) -> PreparedProblem:
    if setting not in H4_SETTINGS:
        raise ValueError(f"unknown H4 setting {setting!r}; choose from {H4_SETTINGS}")
    mf = mean_field or h4_mean_field(bond_length)
    ref_kind, pool_kind = setting.split("/")
    sol = mf.rhf if ref_kind == "rHF" else mf.uhf
    mo = mo_spin_orbital_integrals(mf.ints, sol)
    n_spatial = mf.ints.n_orb
    Ca, Cb = (sol.coeffs[0], sol.coeffs[0]) if len(sol.coeffs) == 1 else sol.coeffs
    s2_full = fermion_to_sparse(s_squared_operator(n_spatial, Ca.T @ Cb))
    basis = sector_basis(2 * n_spatial, 4, n_alpha=2)
    spectrum = fci_solve(mo, basis, s_squared=s2_full)
    reference = prepare_reference("11110000", 2 * n_spatial)
    exact = spectrum.state(0)
    summary = {
        "system": "h4",
        "bond_length": bond_length,
        "setting": setting,
        "rhf_energy": mf.rhf.e_total,
        "uhf_energy": mf.uhf.e_total,
        "uhf_s_squared": uhf_s_squared(mf.uhf),
        "rhf_stability_eigenvalue": mf.rhf_stability,
        "mp2_energy": mf.rhf.e_total + mp2_energy(mf.rhf, mf.ints),
        "fci_energy": spectrum.ground_energy,
        "fci_gap": spectrum.gap,
        "fci_s_squared": spectrum.s_squared[:4].tolist(),
        "reference_infidelity": float(1.0 - abs(np.vdot(exact, reference)) ** 2),
        "ground_state_support": support_size(spectrum.vectors[:, 0]),
    }
    problem = AdaptProblem(
        hamiltonian=fermion_to_sparse_ints(mo),
        reference=reference,
        pool=make_pool(pool_kind.lower(), 2 * n_spatial),
        exact_energy=spectrum.ground_energy,
        exact_state=exact,
        observables={"s_squared": s2_full},
        units="hartree",
        name=f"h4 R={bond_length:g} {setting}",
    )
    return PreparedProblem(problem, spectrum, summary)
