"""Hartree-Fock on arbitrary integral sets, stability analysis and MP2.

Three modes share one implementation with a list of orbital "channels":

* ``spinless``: one channel over spinless or spin-orbital modes
  (``F = h + J - K``);
* ``restricted``: closed-shell spatial orbitals (``F = h + 2J - K``);
* ``unrestricted``: separate alpha and beta channels.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .molecular import spatial_to_spin_orbital
from .operators import IntegralSet

log = logging.getLogger(__name__)

MODES = ("spinless", "restricted", "unrestricted")


class SCFConvergenceError(RuntimeError):
    """Raised when the SCF does not converge; carries the last iterate."""

    def __init__(self, message: str, solution: "HFSolution"):
        super().__init__(message)
        self.solution = solution


class StabilityError(RuntimeError):
    pass


class MP2DivergenceError(ZeroDivisionError):
    pass


@dataclass
class SCFOptions:
    max_iter: int = 500
    e_tol: float = 1e-12
    d_tol: float = 1e-10
    comm_tol: float = 1e-8
    diis_space: int = 8
    diis_start: int = 2
    damping: float = 0.0


@dataclass
class HFSolution:
    mode: str
    coeffs: list[np.ndarray]
    orbital_energies: list[np.ndarray]
    n_occ: list[int]
    e_total: float
    converged: bool
    iterations: int
    stability_eigenvalue: float | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def C(self):
        return self.coeffs[0] if len(self.coeffs) == 1 else tuple(self.coeffs)

    def densities(self) -> list[np.ndarray]:
        return [C[:, :n] @ C[:, :n].conj().T for C, n in zip(self.coeffs, self.n_occ)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["coeffs"] = [c.tolist() for c in self.coeffs]
        d["orbital_energies"] = [e.tolist() for e in self.orbital_energies]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "HFSolution":
        d = dict(d)
        d["coeffs"] = [np.array(c) for c in d["coeffs"]]
        d["orbital_energies"] = [np.array(e) for e in d["orbital_energies"]]
        return cls(**d)


@dataclass
class InstabilityDirection:
    """Occupied-virtual rotation generator, one ``n_occ x n_virt`` block per channel.

    ``kind`` is ``internal`` (same mode) or ``external`` (restricted to
    unrestricted, alpha and beta rotated oppositely).
    """

    kind: str
    kappa: list[np.ndarray]


# --------------------------------------------------------------------------
# Fock builds
# --------------------------------------------------------------------------


def _coulomb(g, D):
    return np.einsum("pqrs,rs->pq", g, D, optimize=True)


def _exchange(g, D):
    return np.einsum("psrq,rs->pq", g, D, optimize=True)


def fock_matrices(ints: IntegralSet, Ds: Sequence[np.ndarray], mode: str) -> tuple[list[np.ndarray], float]:
    """Fock matrices per channel and the total energy for the given densities."""
    h, g = ints.h, ints.g
    if mode == "spinless":
        (D,) = Ds
        F = h + _coulomb(g, D) - _exchange(g, D)
        E = ints.e0 + 0.5 * np.sum(D.T * (h + F))
        return [F], float(np.real(E))
    if mode == "restricted":
        (D,) = Ds
        F = h + 2.0 * _coulomb(g, D) - _exchange(g, D)
        E = ints.e0 + np.sum(D.T * (h + F))
        return [F], float(np.real(E))
    Da, Db = Ds
    Jt = _coulomb(g, Da + Db)
    Fa = h + Jt - _exchange(g, Da)
    Fb = h + Jt - _exchange(g, Db)
    E = ints.e0 + 0.5 * (np.sum(Da.T * (h + Fa)) + np.sum(Db.T * (h + Fb)))
    return [Fa, Fb], float(np.real(E))


def hf_energy(ints: IntegralSet, coeffs: Sequence[np.ndarray], n_occ: Sequence[int], mode: str) -> float:
    Ds = [C[:, :n] @ C[:, :n].conj().T for C, n in zip(coeffs, n_occ)]
    return fock_matrices(ints, Ds, mode)[1]


def _fix_signs(C: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(C) > np.abs(C).max(axis=0) - 1e-8, axis=0)
    signs = np.sign(C[idx, np.arange(C.shape[1])])
    signs[signs == 0] = 1
    return C * signs


def _diagonalize(F: np.ndarray, S: np.ndarray | None):
    e, C = sla.eigh(F) if S is None else sla.eigh(F, S)
    return e, _fix_signs(C)


def _occupations(ints: IntegralSet, n_particles, mode: str) -> list[int]:
    if mode not in MODES:
        raise ValueError(f"unknown HF mode {mode!r}")
    if mode == "spinless":
        if ints.flavor == "spatial":
            raise ValueError("spinless HF needs spinless or spin-orbital integrals")
        occ = [int(n_particles)]
    elif mode == "restricted":
        if ints.flavor != "spatial":
            raise ValueError("restricted HF needs spatial integrals")
        if int(n_particles) % 2:
            raise ValueError("restricted HF needs an even electron count")
        occ = [int(n_particles) // 2]
    else:
        if ints.flavor != "spatial":
            raise ValueError("unrestricted HF needs spatial integrals")
        if isinstance(n_particles, (tuple, list)):
            occ = [int(n_particles[0]), int(n_particles[1])]
        else:
            n = int(n_particles)
            occ = [(n + 1) // 2, n // 2]
    if any(o > ints.n_orb or o < 0 for o in occ):
        raise ValueError("more particles than orbitals in a channel")
    return occ


class _DIIS:
    def __init__(self, space: int):
        self.space = space
        self.focks: list[np.ndarray] = []
        self.errors: list[np.ndarray] = []

    def update(self, F: np.ndarray, err: np.ndarray) -> np.ndarray:
        self.focks.append(F)
        self.errors.append(err)
        if len(self.focks) > self.space:
            self.focks.pop(0)
            self.errors.pop(0)
        m = len(self.focks)
        if m < 2:
            return F
        B = -np.ones((m + 1, m + 1))
        B[m, m] = 0.0
        for i in range(m):
            for j in range(i + 1):
                B[i, j] = B[j, i] = np.real(np.vdot(self.errors[i], self.errors[j]))
        rhs = np.zeros(m + 1)
        rhs[m] = -1.0
        try:
            c = np.linalg.solve(B, rhs)[:m]
        except np.linalg.LinAlgError:
            return F
        if not np.all(np.isfinite(c)):
            return F
        return sum(ci * Fi for ci, Fi in zip(c, self.focks))


def _iterate(ints, Ds, occ, mode, opts, S, symmetrize):
    """DIIS-accelerated fixed-point loop; returns ``(densities, converged, iterations)``."""
    nch = len(occ)
    diis = _DIIS(opts.diis_space)
    Sm = np.eye(ints.n_orb) if S is None else S
    e_old = None
    converged = False
    it = 0
    for it in range(1, opts.max_iter + 1):
        Fs, E = fock_matrices(ints, Ds, mode)
        errs = [F @ D @ Sm - Sm @ D @ F for F, D in zip(Fs, Ds)]
        comm = max(np.max(np.abs(e)) for e in errs)
        stacked = np.concatenate([F.ravel() for F in Fs])
        if it > opts.diis_start:
            stacked = diis.update(stacked, np.concatenate([e.ravel() for e in errs]))
        n2 = ints.n_orb**2
        Fx = [stacked[k * n2 : (k + 1) * n2].reshape(ints.n_orb, ints.n_orb) for k in range(nch)]
        new_Ds = []
        for F, n in zip(Fx, occ):
            _, C = _diagonalize(F, S)
            new_Ds.append(C[:, :n] @ C[:, :n].conj().T)
        if symmetrize is not None:
            new_Ds = [0.5 * (D + symmetrize @ D @ symmetrize.T) for D in new_Ds]
        if opts.damping and it <= opts.diis_start:
            new_Ds = [opts.damping * D0 + (1 - opts.damping) * D1 for D0, D1 in zip(Ds, new_Ds)]
        drms = max(np.sqrt(np.mean(np.abs(D1 - D0) ** 2)) for D0, D1 in zip(Ds, new_Ds))
        dE = abs(E - e_old) if e_old is not None else np.inf
        Ds = new_Ds
        e_old = E
        if drms < opts.d_tol and dE < opts.e_tol and comm < opts.comm_tol:
            converged = True
            break
    return Ds, converged, it


def hf_solve(
    ints: IntegralSet,
    n_particles,
    mode: str = "spinless",
    guess="core",
    options: SCFOptions | None = None,
    overlap: np.ndarray | None = None,
    symmetrize: np.ndarray | None = None,
) -> HFSolution:
    """Self-consistent field with DIIS acceleration.

    ``guess`` is ``"core"``, an :class:`HFSolution`, a sequence of coefficient
    matrices (one per channel), or ``{"density": [...]}``.  ``symmetrize`` is
    an orthogonal one-body matrix ``P``; when given, each density is replaced
    by ``(D + P D P^T)/2`` every cycle.
    """
    opts = options or SCFOptions()
    occ = _occupations(ints, n_particles, mode)
    nch = len(occ)
    S = overlap

    if isinstance(guess, str):
        if guess != "core":
            raise ValueError(f"unknown guess {guess!r}")
        _, C0 = _diagonalize(ints.h, S)
        coeffs = [C0] * nch
        Ds = [C[:, :n] @ C[:, :n].T for C, n in zip(coeffs, occ)]
    elif isinstance(guess, dict):
        Ds = [np.asarray(D) for D in guess["density"]]
    else:
        cs = guess.coeffs if isinstance(guess, HFSolution) else list(guess)
        if len(cs) == 1 and nch == 2:
            cs = [cs[0], cs[0]]
        if len(cs) != nch:
            raise ValueError("guess has the wrong number of channels")
        Ds = [C[:, :n] @ C[:, :n].conj().T for C, n in zip(cs, occ)]
    if len(Ds) == 1 and nch == 2:
        Ds = [Ds[0], Ds[0]]

    if symmetrize is not None:
        Ds = [0.5 * (D + symmetrize @ D @ symmetrize.T) for D in Ds]

    start = Ds
    notes = []
    Ds, converged, it = _iterate(ints, Ds, occ, mode, opts, S, symmetrize)
    if not converged and not opts.damping:
        # exactly symmetric problems can trap undamped DIIS in a two-cycle
        log.info("SCF did not converge undamped; retrying with damping")
        retry = SCFOptions(**{**asdict(opts), "damping": 0.5, "diis_start": max(opts.diis_start, 5)})
        Ds, converged, extra = _iterate(ints, start, occ, mode, retry, S, symmetrize)
        it += extra
        notes.append("converged with damped restart")

    # canonical orbitals of the final (non-extrapolated) Fock operator
    Fs, E = fock_matrices(ints, Ds, mode)
    coeffs, energies = [], []
    for F in Fs:
        eps, C = _diagonalize(F, S)
        coeffs.append(C)
        energies.append(eps)
    E = hf_energy(ints, coeffs, occ, mode) if symmetrize is None else E
    sol = HFSolution(mode, coeffs, energies, occ, E, converged, it, notes=notes)
    if symmetrize is not None:
        sol.notes.append("parity-projected density iteration")
    if not converged:
        raise SCFConvergenceError(f"SCF did not converge in {opts.max_iter} iterations", sol)
    return sol


# --------------------------------------------------------------------------
# generalized (spin-orbital) view of a solution
# --------------------------------------------------------------------------


def _spin_orbital_view(sol: HFSolution, ints: IntegralSet):
    """Spin-orbital integrals, MO coefficients, occupied mask and channel tags."""
    if sol.mode == "spinless":
        C = sol.coeffs[0]
        n = C.shape[1]
        occ = np.zeros(n, bool)
        occ[: sol.n_occ[0]] = True
        eps = sol.orbital_energies[0]
        return ints, C, occ, np.zeros(n, int), eps
    so = spatial_to_spin_orbital(ints)
    Ca, Cb = (sol.coeffs[0], sol.coeffs[0]) if sol.mode == "restricted" else sol.coeffs
    ea, eb = (sol.orbital_energies[0],) * 2 if sol.mode == "restricted" else sol.orbital_energies
    na, nb = (sol.n_occ[0],) * 2 if sol.mode == "restricted" else sol.n_occ
    n = Ca.shape[0]
    C = np.zeros((2 * n, 2 * n), dtype=np.result_type(Ca, Cb))
    C[0::2, 0::2] = Ca
    C[1::2, 1::2] = Cb
    occ = np.zeros(2 * n, bool)
    occ[0 : 2 * na : 2] = True
    occ[1 : 2 * nb : 2] = True
    spin = np.tile([0, 1], n)
    eps = np.empty(2 * n)
    eps[0::2], eps[1::2] = ea, eb
    return so, C, occ, spin, eps


def _mo_tensors(ints_so: IntegralSet, C: np.ndarray, occ: np.ndarray):
    h = C.conj().T @ ints_so.h @ C
    g = np.einsum("ap,br,cq,ds,abcd->prqs", C.conj(), C, C.conj(), C, ints_so.g, optimize=True)
    o = np.where(occ)[0]
    F = h + np.einsum("pqkk->pq", g[:, :, o][:, :, :, o]) - np.einsum("pkkq->pq", g[:, o][:, :, o])
    return h, g, F


def orbital_hessian(sol: HFSolution, ints: IntegralSet):
    """Real orbital-rotation Hessian over same-spin occupied-virtual pairs.

    Returns ``(H, pairs, spin)`` where ``pairs`` lists ``(i, a)`` spin-orbital
    indices and ``H = d^2E / dk_ia dk_jb`` for the rotation
    ``C -> C expm(X)``, ``X[a, i] = k_ia = -X[i, a]``.
    """
    ints_so, C, occ, spin, _ = _spin_orbital_view(sol, ints)
    _, g, F = _mo_tensors(ints_so, C, occ)
    o = np.where(occ)[0]
    v = np.where(~occ)[0]
    pairs = [(i, a) for i in o for a in v if spin[i] == spin[a]]
    I = np.array([p[0] for p in pairs], dtype=int)
    A_ = np.array([p[1] for p in pairs], dtype=int)
    dij = (I[:, None] == I[None, :]).astype(float)
    dab = (A_[:, None] == A_[None, :]).astype(float)
    Fab = F[A_[:, None], A_[None, :]]
    Fij = F[I[None, :], I[:, None]]
    # <aj||ib> and <ab||ij>, <pq|rs> = (pr|qs)
    ajib = g[A_[:, None], I[:, None], I[None, :], A_[None, :]] - g[A_[:, None], A_[None, :], I[None, :], I[:, None]]
    abij = g[A_[:, None], I[:, None], A_[None, :], I[None, :]] - g[A_[:, None], I[None, :], A_[None, :], I[:, None]]
    Amat = dij * Fab - dab * Fij + ajib
    H = 2.0 * np.real(Amat + abij)
    return 0.5 * (H + H.T), pairs, spin


def stability_analysis(sol: HFSolution, ints: IntegralSet) -> tuple[float, InstabilityDirection]:
    """Lowest eigenvalue of the real orbital-rotation Hessian and its direction.

    For restricted solutions both the singlet (internal) and the
    restricted-to-unrestricted triplet (external) blocks are examined.
    """
    if not sol.converged:
        raise StabilityError("stability analysis needs a converged solution")
    H, pairs, spin = orbital_hessian(sol, ints)
    if not pairs:
        sol.stability_eigenvalue = np.inf
        return np.inf, InstabilityDirection("internal", [])

    if sol.mode == "restricted":
        n_occ = sol.n_occ[0]
        nmo = sol.coeffs[0].shape[1]
        spatial_pairs = [(i, a) for i in range(n_occ) for a in range(n_occ, nmo)]
        index = {p: k for k, p in enumerate(pairs)}
        Ps = np.zeros((len(pairs), len(spatial_pairs)))
        Pt = np.zeros_like(Ps)
        for k, (i, a) in enumerate(spatial_pairs):
            Ps[index[(2 * i, 2 * a)], k] = Pt[index[(2 * i, 2 * a)], k] = 1 / np.sqrt(2)
            Ps[index[(2 * i + 1, 2 * a + 1)], k] = 1 / np.sqrt(2)
            Pt[index[(2 * i + 1, 2 * a + 1)], k] = -1 / np.sqrt(2)
        ws, vs = np.linalg.eigh(Ps.T @ H @ Ps)
        wt, vt = np.linalg.eigh(Pt.T @ H @ Pt)
        kap = np.zeros((n_occ, nmo - n_occ))
        if ws[0] <= wt[0]:
            for k, (i, a) in enumerate(spatial_pairs):
                kap[i, a - n_occ] = vs[k, 0]
            lowest, direction = ws[0], InstabilityDirection("internal", [kap])
        else:
            for k, (i, a) in enumerate(spatial_pairs):
                kap[i, a - n_occ] = vt[k, 0]
            lowest, direction = wt[0], InstabilityDirection("external", [kap, -kap])
    else:
        w, vecs = np.linalg.eigh(H)
        lowest = w[0]
        if sol.mode == "spinless":
            n = sol.n_occ[0]
            kap = np.zeros((n, sol.coeffs[0].shape[1] - n))
            for k, (i, a) in enumerate(pairs):
                kap[i, a - n] = vecs[k, 0]
            direction = InstabilityDirection("internal", [kap])
        else:
            kaps = [np.zeros((n, C.shape[1] - n)) for C, n in zip(sol.coeffs, sol.n_occ)]
            for k, (i, a) in enumerate(pairs):
                ch = spin[i]
                n = sol.n_occ[ch]
                kaps[ch][i // 2, a // 2 - n] = vecs[k, 0]
            direction = InstabilityDirection("internal", kaps)
    sol.stability_eigenvalue = float(lowest)
    return float(lowest), direction


def rotate_orbitals(C: np.ndarray, kappa: np.ndarray, angle: float) -> np.ndarray:
    """Apply ``expm(angle * X)`` with ``X[a, i] = kappa[i, a - n_occ]`` to the columns of ``C``."""
    n_occ = kappa.shape[0]
    nmo = C.shape[1]
    X = np.zeros((nmo, nmo))
    X[n_occ:, :n_occ] = kappa.T
    X[:n_occ, n_occ:] = -kappa
    return C @ sla.expm(angle * X)


def follow_instability(
    sol: HFSolution,
    ints: IntegralSet,
    direction: InstabilityDirection | None = None,
    step: float = 0.1,
    options: SCFOptions | None = None,
    overlap: np.ndarray | None = None,
    max_rounds: int = 5,
    tol: float = 1e-8,
) -> HFSolution:
    """Rotate downhill along the instability, re-converge, repeat until stable.

    Raises :class:`StabilityError` if there is no negative direction.  If the
    energy cannot be lowered the original solution is returned with a note.
    """
    if direction is None:
        lowest, direction = stability_analysis(sol, ints)
        if lowest >= -tol:
            raise StabilityError("no negative Hessian direction to follow")
    current = sol
    n_total = sum(sol.n_occ) if sol.mode != "restricted" else 2 * sol.n_occ[0]
    for rnd in range(max_rounds):
        norm = np.sqrt(sum(np.sum(k**2) for k in direction.kappa))
        kappa = [k / norm for k in direction.kappa]
        if direction.kind == "external":
            mode = "unrestricted"
            base = [current.coeffs[0], current.coeffs[0]]
        else:
            mode = current.mode
            base = current.coeffs
        if mode == "unrestricted":
            n_part = tuple(current.n_occ) * 2 if len(current.n_occ) == 1 else tuple(current.n_occ)
        else:
            n_part = n_total
        best = None
        for factor in (1.0, 2.0, 4.0):
            guess = [rotate_orbitals(C, k, step * factor) for C, k in zip(base, kappa)]
            try:
                trial = hf_solve(ints, n_part, mode, guess=guess, options=options, overlap=overlap)
            except SCFConvergenceError as exc:
                log.warning("re-convergence after rotation failed: %s", exc)
                continue
            if trial.e_total < current.e_total - 1e-10:
                best = trial
                break
        if best is None:
            break
        current = best
        lowest, direction = stability_analysis(current, ints)
        if lowest >= -tol:
            break
    if current is sol or current.e_total > sol.e_total + 1e-12:
        out = HFSolution(**{**sol.__dict__, "notes": sol.notes + ["instability following did not lower the energy"]})
        return out
    current.notes.append(f"followed instability from E={sol.e_total:.12f}")
    return current


def mp2_energy(sol: HFSolution, ints: IntegralSet, denom_tol: float = 1e-8) -> float:
    """Spin-orbital MP2 correlation energy with antisymmetrized integrals."""
    if not sol.converged:
        raise StabilityError("MP2 needs a converged reference")
    ints_so, C, occ, _, eps = _spin_orbital_view(sol, ints)
    o = np.where(occ)[0]
    v = np.where(~occ)[0]
    Co, Cv = C[:, o], C[:, v]
    g_ovov = np.einsum("ai,bj,ck,dl,abcd->ijkl", Co.conj(), Cv, Co.conj(), Cv, ints_so.g, optimize=True)
    # <ij||ab> = (ia|jb) - (ib|ja)
    anti = g_ovov.transpose(0, 2, 1, 3) - g_ovov.transpose(0, 2, 3, 1)
    denom = eps[o][:, None, None, None] + eps[o][None, :, None, None] - eps[v][None, None, :, None] - eps[v][None, None, None, :]
    num = np.abs(anti) ** 2
    bad = (np.abs(denom) < denom_tol) & (num > 1e-20)
    if np.any(bad):
        raise MP2DivergenceError("vanishing MP2 denominator with non-zero numerator")
    safe = np.where(np.abs(denom) < denom_tol, 1.0, denom)
    return float(0.25 * np.sum(np.where(num > 1e-20, num / safe, 0.0)))


def salc_coefficients(n_sites: int) -> np.ndarray:
    """Mirror-pair orbitals ordered ``g0, u0, g1, u1, ...``.

    Pair ``k`` couples sites ``k`` and ``n-1-k``; ``g_k = (e_k + e_{n-1-k})/sqrt2``
    and ``u_k = (e_k - e_{n-1-k})/sqrt2``.
    """
    if n_sites % 2:
        raise ValueError("SALC orbitals need an even number of sites")
    C = np.zeros((n_sites, n_sites))
    r = 1 / np.sqrt(2)
    for k in range(n_sites // 2):
        C[k, 2 * k] = C[n_sites - 1 - k, 2 * k] = r
        C[k, 2 * k + 1] = r
        C[n_sites - 1 - k, 2 * k + 1] = -r
    return C


def determinant_symmetry_overlap(C_occ: np.ndarray, W: np.ndarray) -> float:
    """``<D|Gamma(W)|D>`` for the determinant of ``C_occ`` and one-body unitary ``W``."""
    return float(np.real(np.linalg.det(C_occ.conj().T @ W @ C_occ)))
