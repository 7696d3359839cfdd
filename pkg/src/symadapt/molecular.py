"""Minimal-basis molecular integrals for s-type Gaussians, plus FCIDUMP I/O."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources

import numpy as np
from scipy.special import erf

from .operators import IntegralSet, transform_integrals

ANGSTROM_TO_BOHR = 1.8897259886
NUCLEAR_CHARGE = {"H": 1, "He": 2}


class BasisParseError(ValueError):
    pass


class UnsupportedAngularMomentumError(ValueError):
    pass


class SingularGeometryError(ValueError):
    pass


class FCIDumpError(ValueError):
    pass


@dataclass
class Geometry:
    atoms: list[tuple[str, tuple[float, float, float]]]
    charge: int = 0

    def __post_init__(self):
        for sym, pos in self.atoms:
            if sym not in NUCLEAR_CHARGE:
                raise ValueError(f"unsupported element {sym!r}")
            if not np.all(np.isfinite(pos)):
                raise ValueError("non-finite atomic position")

    @property
    def n_electrons(self) -> int:
        return sum(NUCLEAR_CHARGE[s] for s, _ in self.atoms) - self.charge

    def coords_bohr(self) -> np.ndarray:
        return np.array([p for _, p in self.atoms], dtype=float) * ANGSTROM_TO_BOHR

    @classmethod
    def linear_chain(cls, n_atoms: int, spacing: float, element: str = "H") -> "Geometry":
        """Equally spaced atoms along z, ``spacing`` in angstrom."""
        return cls([(element, (0.0, 0.0, i * spacing)) for i in range(n_atoms)])


@dataclass
class BasisShell:
    center: int
    angular_momentum: int
    primitives: list[tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        if self.angular_momentum != 0:
            raise UnsupportedAngularMomentumError("only s shells are supported")
        if any(a <= 0 for a, _ in self.primitives):
            raise ValueError("primitive exponents must be positive")


_SHELL_L = {"S": 0, "P": 1, "D": 2, "F": 3, "G": 4, "SP": 1, "L": 1}


def _float(tok: str) -> float:
    return float(tok.replace("D", "E").replace("d", "e"))


def _normalize_s(prims: list[tuple[float, float]]) -> list[tuple[float, float]]:
    scaled = [(a, c * (2 * a / math.pi) ** 0.75) for a, c in prims]
    norm = sum(ci * cj * (math.pi / (ai + aj)) ** 1.5 for ai, ci in scaled for aj, cj in scaled)
    return [(a, c / math.sqrt(norm)) for a, c in scaled]


def parse_basis(text: str) -> dict[str, list[BasisShell]]:
    """Parse Gaussian94-format basis text into per-element shell templates.

    Contraction coefficients are returned multiplied by primitive norms and
    renormalized so each contracted function has unit self-overlap.
    """
    lines = [(i + 1, ln.split("!")[0].strip()) for i, ln in enumerate(text.splitlines())]
    lines = [(n, ln) for n, ln in lines if ln]
    if not lines:
        raise BasisParseError("empty basis text")
    out: dict[str, list[BasisShell]] = {}
    pos = 0
    while pos < len(lines):
        lineno, ln = lines[pos]
        if ln.startswith("****"):
            pos += 1
            continue
        toks = ln.split()
        if len(toks) != 2 or not toks[0].isalpha():
            raise BasisParseError(f"line {lineno}: expected element header, got {ln!r}")
        element = toks[0].capitalize()
        pos += 1
        shells: list[BasisShell] = []
        while pos < len(lines) and not lines[pos][1].startswith("****"):
            lineno, ln = lines[pos]
            toks = ln.split()
            kind = toks[0].upper()
            if kind not in _SHELL_L or len(toks) < 2:
                raise BasisParseError(f"line {lineno}: malformed shell header {ln!r}")
            if _SHELL_L[kind] != 0:
                raise UnsupportedAngularMomentumError(f"line {lineno}: {kind} shells are not supported")
            try:
                nprim = int(toks[1])
            except ValueError:
                raise BasisParseError(f"line {lineno}: bad primitive count {toks[1]!r}") from None
            prims = []
            for k in range(nprim):
                pos += 1
                if pos >= len(lines):
                    raise BasisParseError(f"line {lineno}: truncated shell")
                plineno, pln = lines[pos]
                ptoks = pln.split()
                try:
                    prims.append((_float(ptoks[0]), _float(ptoks[1])))
                except (ValueError, IndexError):
                    raise BasisParseError(f"line {plineno}: malformed primitive {pln!r}") from None
            shells.append(BasisShell(0, 0, _normalize_s(prims)))
            pos += 1
        if not shells:
            raise BasisParseError(f"element {element} has no shells")
        out[element] = shells
    if not out:
        raise BasisParseError("no basis entries found")
    return out


def load_basis(name: str = "sto-3g") -> dict[str, list[BasisShell]]:
    text = resources.files("symadapt.data").joinpath(f"{name.lower()}.gbs").read_text()
    return parse_basis(text)


def read_xyz(text: str) -> Geometry:
    """Read ``element x y z`` lines (angstrom); an optional count/comment header is skipped."""
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if rows and len(rows[0]) == 1 and rows[0][0].isdigit():
        rows = rows[2:]
    atoms = []
    for toks in rows:
        if len(toks) != 4:
            raise ValueError(f"malformed geometry line {' '.join(toks)!r}")
        atoms.append((toks[0].capitalize(), tuple(float(t) for t in toks[1:])))
    return Geometry(atoms)


def boys0(t):
    """Zeroth-order Boys function with a series branch near ``t = 0``."""
    t = np.asarray(t, dtype=float)
    small = t < 1e-10
    safe = np.where(small, 1.0, t)
    big = 0.5 * np.sqrt(np.pi / safe) * erf(np.sqrt(safe))
    return np.where(small, 1.0 - t / 3.0, big)


def _expand(geom: Geometry, basis: dict[str, list[BasisShell]]):
    coords = geom.coords_bohr()
    funcs = []
    for a, (sym, _) in enumerate(geom.atoms):
        if sym not in basis:
            raise ValueError(f"no basis functions for element {sym}")
        for shell in basis[sym]:
            exps = np.array([p[0] for p in shell.primitives])
            coefs = np.array([p[1] for p in shell.primitives])
            funcs.append((coords[a], exps, coefs))
    return coords, funcs


def compute_integrals(geom: Geometry, basis: dict[str, list[BasisShell]]) -> tuple[IntegralSet, np.ndarray]:
    """AO-basis Hamiltonian integrals and overlap matrix (atomic units).

    Returns the spatial IntegralSet (nuclear repulsion as ``e0``) and the
    overlap ``S``; no orthogonalization is applied.
    """
    coords, funcs = _expand(geom, basis)
    charges = np.array([NUCLEAR_CHARGE[s] for s, _ in geom.atoms], dtype=float)
    n_atoms = len(coords)
    e0 = 0.0
    for i in range(n_atoms):
        for j in range(i):
            r = np.linalg.norm(coords[i] - coords[j])
            if r < 1e-8:
                raise SingularGeometryError(f"atoms {j} and {i} coincide")
            e0 += charges[i] * charges[j] / r

    nbf = len(funcs)
    S = np.zeros((nbf, nbf))
    T = np.zeros((nbf, nbf))
    V = np.zeros((nbf, nbf))
    pairs = {}
    for m, (A, a, ca) in enumerate(funcs):
        for n, (B, b, cb) in enumerate(funcs):
            p = a[:, None] + b[None, :]
            mu = a[:, None] * b[None, :] / p
            ab2 = float(np.dot(A - B, A - B))
            K = np.exp(-mu * ab2)
            P = (a[:, None, None] * A + b[None, :, None] * B) / p[..., None]
            cc = ca[:, None] * cb[None, :]
            s_prim = (np.pi / p) ** 1.5 * K
            S[m, n] = np.sum(cc * s_prim)
            T[m, n] = np.sum(cc * mu * (3.0 - 2.0 * mu * ab2) * s_prim)
            for c in range(n_atoms):
                pc2 = np.sum((P - coords[c]) ** 2, axis=-1)
                V[m, n] -= charges[c] * np.sum(cc * 2.0 * np.pi / p * K * boys0(p * pc2))
            pairs[m, n] = (p.ravel(), (cc * K).ravel(), P.reshape(-1, 3))

    g = np.zeros((nbf, nbf, nbf, nbf))
    for (m, n), (p, w1, P) in pairs.items():
        if n > m:
            continue
        for (k, l), (q, w2, Q) in pairs.items():
            if l > k or (m * (m + 1) // 2 + n) < (k * (k + 1) // 2 + l):
                continue
            pq = p[:, None] + q[None, :]
            rho = p[:, None] * q[None, :] / pq
            pq2 = np.sum((P[:, None, :] - Q[None, :, :]) ** 2, axis=-1)
            pref = 2.0 * np.pi**2.5 / (p[:, None] * q[None, :] * np.sqrt(pq))
            val = np.sum(w1[:, None] * w2[None, :] * pref * boys0(rho * pq2))
            for i, j, r, s in ((m, n, k, l), (n, m, k, l), (m, n, l, k), (n, m, l, k)):
                g[i, j, r, s] = g[r, s, i, j] = val
    ints = IntegralSet(nbf, e0, T + V, g, "spatial", nelec=geom.n_electrons, ms2=0)
    return ints, S


def lowdin_orthonormalize(ints: IntegralSet, S: np.ndarray) -> tuple[IntegralSet, np.ndarray]:
    """Re-express AO integrals in the symmetric (Lowdin) orthonormal basis.

    Returns the new IntegralSet and ``X = S^{-1/2}`` (columns = new orbitals).
    """
    w, U = np.linalg.eigh(S)
    if w.min() <= 1e-10:
        raise SingularGeometryError("overlap matrix is numerically singular")
    X = U @ np.diag(w**-0.5) @ U.T
    return transform_integrals(ints, X), X


def spatial_to_spin_orbital(ints: IntegralSet) -> IntegralSet:
    """Lift spatial integrals to interleaved spin orbitals (alpha even, beta odd)."""
    if ints.flavor != "spatial":
        raise ValueError("expected a spatial IntegralSet")
    n = ints.n_orb
    h = np.kron(ints.h, np.eye(2))
    g = _lift_g(ints.g)
    return IntegralSet(2 * n, ints.e0, h, g, "spin-orbital", ints.nelec, ints.ms2)


def _lift_g(g: np.ndarray) -> np.ndarray:
    n = g.shape[0]
    out = np.zeros((2 * n,) * 4, dtype=g.dtype)
    for s1 in range(2):
        for s2 in range(2):
            out[s1::2, s1::2, s2::2, s2::2] = g
    return out


# --------------------------------------------------------------------------
# FCIDUMP
# --------------------------------------------------------------------------


def fcidump_write(ints: IntegralSet, nelec: int | None = None, ms2: int | None = None, tol: float = 1e-14) -> str:
    """Serialize real 8-fold-symmetric integrals in the standard FCIDUMP layout."""
    if np.iscomplexobj(ints.h) or np.iscomplexobj(ints.g):
        raise FCIDumpError("FCIDUMP export requires real integrals")
    g = ints.g
    if not np.allclose(g, g.transpose(1, 0, 2, 3), atol=1e-12):
        raise FCIDumpError("FCIDUMP export requires 8-fold symmetric two-body integrals")
    n = ints.n_orb
    nelec = ints.nelec if nelec is None else nelec
    ms2 = (ints.ms2 if ints.ms2 is not None else 0) if ms2 is None else ms2
    lines = [
        f" &FCI NORB={n:3d},NELEC={nelec if nelec is not None else 0:3d},MS2={ms2},",
        "  ORBSYM=" + ",".join("1" for _ in range(n)) + ",",
        "  ISYM=1,",
        " &END",
    ]
    fmt = "{: .16e} {:4d} {:4d} {:4d} {:4d}"
    for i in range(n):
        for j in range(i + 1):
            ij = i * (i + 1) // 2 + j
            for k in range(n):
                for l in range(k + 1):
                    if k * (k + 1) // 2 + l > ij:
                        continue
                    v = g[i, j, k, l]
                    if abs(v) > tol:
                        lines.append(fmt.format(v, i + 1, j + 1, k + 1, l + 1))
    for i in range(n):
        for j in range(i + 1):
            if abs(ints.h[i, j]) > tol:
                lines.append(fmt.format(ints.h[i, j], i + 1, j + 1, 0, 0))
    lines.append(fmt.format(ints.e0, 0, 0, 0, 0))
    return "\n".join(lines) + "\n"


_HEADER_RE = re.compile(r"&FCI(.*?)(&END|/)", re.S | re.I)


def fcidump_read(text: str, flavor: str = "spatial") -> IntegralSet:
    """Parse FCIDUMP text; ``flavor`` says how to interpret the orbitals."""
    m = _HEADER_RE.search(text)
    if m is None:
        raise FCIDumpError("missing &FCI ... &END header")
    header = m.group(1)
    parts = re.split(r"([A-Za-z_][A-Za-z0-9_]*)\s*=", header)
    fields = {key.upper(): val.strip().strip(",").strip() for key, val in zip(parts[1::2], parts[2::2])}
    if "NORB" not in fields:
        raise FCIDumpError("header lacks NORB")
    try:
        n = int(fields["NORB"])
        nelec = int(fields["NELEC"]) if "NELEC" in fields else None
        ms2 = int(fields["MS2"]) if "MS2" in fields else None
    except ValueError:
        raise FCIDumpError("non-integer NORB/NELEC/MS2 in header") from None
    h = np.zeros((n, n))
    g = np.zeros((n, n, n, n))
    e0 = 0.0
    body_start = text[: m.end()].count("\n") + 1
    for offset, ln in enumerate(text[m.end() :].splitlines()):
        toks = ln.split()
        if not toks:
            continue
        lineno = body_start + offset
        if len(toks) != 5:
            raise FCIDumpError(f"line {lineno}: expected 'value i j k l'")
        try:
            v = _float(toks[0])
            i, j, k, l = (int(t) for t in toks[1:])
        except ValueError:
            raise FCIDumpError(f"line {lineno}: malformed integral entry") from None
        if not all(0 <= x <= n for x in (i, j, k, l)):
            raise FCIDumpError(f"line {lineno}: orbital index out of range 1..{n}")
        if i and j and k and l:
            i, j, k, l = i - 1, j - 1, k - 1, l - 1
            for a, b, c, d in ((i, j, k, l), (j, i, k, l), (i, j, l, k), (j, i, l, k)):
                g[a, b, c, d] = g[c, d, a, b] = v
        elif i and j and not k and not l:
            h[i - 1, j - 1] = h[j - 1, i - 1] = v
        elif not (i or j or k or l):
            e0 = v
        else:
            raise FCIDumpError(f"line {lineno}: unsupported index pattern {i} {j} {k} {l}")
    return IntegralSet(n, e0, h, g, flavor, nelec, ms2)
