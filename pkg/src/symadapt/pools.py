"""Generalized singles-and-doubles operator pools.

* ``gsd``: spinless generalized singles and doubles over ``n_modes`` modes;
* ``ugsd``: the S_z-conserving subset over interleaved spin orbitals
  (even modes alpha, odd modes beta);
* ``sgsd``: spin-summed singles plus, per spatial index block, an
  orthonormal basis of doubles commuting with S^2.

Generators are anti-Hermitian and unnormalized.  Order is deterministic:
singles before doubles, lexicographic in index tuples.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .operators import FermionOperator, PauliOperator, fermion_to_sparse, jordan_wigner

log = logging.getLogger(__name__)

NULL_TOL = 1e-10


@dataclass
class PoolOperator:
    id: int
    generator: FermionOperator
    label: str
    _pauli: PauliOperator | None = field(default=None, repr=False)
    _matrix: sp.csr_matrix | None = field(default=None, repr=False)

    @property
    def pauli(self) -> PauliOperator:
        if self._pauli is None:
            self._pauli = jordan_wigner(self.generator)
        return self._pauli

    @property
    def matrix(self) -> sp.csr_matrix:
        if self._matrix is None:
            self._matrix = self.pauli.to_sparse()
        return self._matrix


@dataclass
class OperatorPool:
    kind: str
    n_modes: int
    operators: list[PoolOperator]

    def __len__(self) -> int:
        return len(self.operators)

    def __getitem__(self, k: int) -> PoolOperator:
        return self.operators[k]

    def __iter__(self):
        return iter(self.operators)

    @property
    def labels(self) -> list[str]:
        return [op.label for op in self.operators]

    def matrices(self) -> list[sp.csr_matrix]:
        return [op.matrix for op in self.operators]

    def to_text(self) -> str:
        """Audit listing: one header line per operator followed by its terms."""
        lines = [f"# pool {self.kind} n_modes={self.n_modes} size={len(self)}"]
        for op in self.operators:
            lines.append(f"{op.id}\t{op.label}")
            for term, c in sorted(op.generator.terms.items()):
                lines.append(f"\t{c.real:+.12f}\t{FermionOperator.term_label(term)}")
        return "\n".join(lines) + "\n"


def _single(n: int, p: int, q: int) -> FermionOperator:
    t = FermionOperator(n, {((p, 1), (q, 0)): 1.0})
    return t - t.dagger()


def _double(n: int, p: int, q: int, r: int, s: int) -> FermionOperator:
    """``a+_p a+_q a_r a_s - h.c.``"""
    t = FermionOperator(n, {((p, 1), (q, 1), (r, 0), (s, 0)): 1.0})
    return t - t.dagger()


def _gsd_index_sets(n: int):
    singles = [(p, q) for p in range(n) for q in range(p)]
    pairs = [(p, q) for p in range(n) for q in range(p)]
    doubles = [(pairs[j], pairs[i]) for j in range(len(pairs)) for i in range(j)]
    return singles, doubles


def _build(kind: str, n: int, entries) -> OperatorPool:
    ops = []
    seen: set = set()
    for label, gen in entries:
        if gen.is_zero():
            continue
        key = frozenset(gen.terms.items())
        neg = frozenset((t, -c) for t, c in gen.terms.items())
        if key in seen or neg in seen:
            continue
        seen.add(key)
        ops.append(PoolOperator(len(ops), gen, label))
    return OperatorPool(kind, n, ops)


def gsd_pool(n_modes: int) -> OperatorPool:
    if n_modes < 2:
        raise ValueError("a GSD pool needs at least two modes")
    singles, doubles = _gsd_index_sets(n_modes)
    entries = [(f"{p}^ {q}", _single(n_modes, p, q)) for p, q in singles]
    entries += [(f"{p}^ {q}^ {r} {s}", _double(n_modes, p, q, r, s)) for (p, q), (r, s) in doubles]
    return _build("gsd", n_modes, entries)


def ugsd_pool(n_spatial: int) -> OperatorPool:
    n = 2 * n_spatial
    singles, doubles = _gsd_index_sets(n)
    entries = [(f"{p}^ {q}", _single(n, p, q)) for p, q in singles if p % 2 == q % 2]
    entries += [
        (f"{p}^ {q}^ {r} {s}", _double(n, p, q, r, s))
        for (p, q), (r, s) in doubles
        if (p % 2) + (q % 2) == (r % 2) + (s % 2)
    ]
    return _build("ugsd", n, entries)


def s_squared_operator(n_spatial: int, overlap: np.ndarray | None = None) -> FermionOperator:
    """Total spin squared over interleaved spin orbitals.

    ``overlap[p, q] = <p_alpha|q_beta>`` lets alpha and beta orbitals differ
    (unrestricted orbitals); the default is the identity.
    """
    n = 2 * n_spatial
    O = np.eye(n_spatial) if overlap is None else np.asarray(overlap)
    s_plus = FermionOperator(
        n,
        {((2 * p, 1), (2 * q + 1, 0)): O[p, q] for p in range(n_spatial) for q in range(n_spatial) if abs(O[p, q]) > 1e-14},
    )
    sz = FermionOperator(n, {((2 * p, 1), (2 * p, 0)): 0.5 for p in range(n_spatial)})
    sz = sz + FermionOperator(n, {((2 * p + 1, 1), (2 * p + 1, 0)): -0.5 for p in range(n_spatial)})
    return s_plus.dagger() * s_plus + sz + sz * sz


def _spatial_pair(p: int, q: int) -> tuple[int, int]:
    a, b = p // 2, q // 2
    return (a, b) if a >= b else (b, a)


def _null_space_basis(cands: list[sp.csr_matrix], s2: sp.csr_matrix) -> np.ndarray:
    """Canonical orthonormal coefficient vectors ``x`` with ``[S^2, sum x_i G_i] = 0``."""
    comms = [sp.csr_matrix(s2 @ G - G @ s2) for G in cands]
    m = len(comms)
    gram = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1):
            gram[i, j] = gram[j, i] = np.real(comms[i].multiply(comms[j].conj()).sum())
    w, V = np.linalg.eigh(gram)
    scale = max(1.0, w.max(initial=0.0))
    N = V[:, w < NULL_TOL * scale]
    if N.shape[1] == 0:
        return N
    proj = N @ N.T
    basis: list[np.ndarray] = []
    for k in range(m):
        v = proj[:, k].copy()
        for b in basis:
            v -= (b @ v) * b
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            v /= nv
            first = np.flatnonzero(np.abs(v) > 1e-10)[0]
            basis.append(v * np.sign(v[first]))
        if len(basis) == N.shape[1]:
            break
    out = np.array(basis).T
    out[np.abs(out) < 1e-13] = 0.0
    return out


def sgsd_pool(n_spatial: int) -> OperatorPool:
    n = 2 * n_spatial
    entries = []
    for p in range(n_spatial):
        for q in range(p):
            gen = _single(n, 2 * p, 2 * q) + _single(n, 2 * p + 1, 2 * q + 1)
            entries.append((f"s {p}^ {q}", gen))

    s2 = fermion_to_sparse(s_squared_operator(n_spatial))
    _, doubles = _gsd_index_sets(n)
    blocks: dict[tuple, list[tuple[int, int, int, int]]] = {}
    for (p, q), (r, s) in doubles:
        if (p % 2) + (q % 2) != (r % 2) + (s % 2):
            continue
        key = tuple(sorted((_spatial_pair(p, q), _spatial_pair(r, s))))
        blocks.setdefault(key, []).append((p, q, r, s))
    for key in sorted(blocks):
        idx = blocks[key]
        gens = [_double(n, *t) for t in idx]
        coeffs = _null_space_basis([fermion_to_sparse(g) for g in gens], s2)
        if coeffs.shape[1] == 0:
            log.info("no singlet doubles in block %s", key)
            continue
        (P, Q), (R, S) = key
        for k in range(coeffs.shape[1]):
            gen = FermionOperator(n)
            for c, g in zip(coeffs[:, k], gens):
                if c != 0.0:
                    gen = gen + g * c
            entries.append((f"d {P},{Q}|{R},{S} #{k}", gen))
    return _build("sgsd", n, entries)


def make_pool(kind: str, n_modes: int) -> OperatorPool:
    """Pool by name; ``n_modes`` counts spin orbitals for ``ugsd`` and ``sgsd``."""
    if kind == "gsd":
        return gsd_pool(n_modes)
    if n_modes % 2:
        raise ValueError(f"{kind} pool needs an even number of spin orbitals")
    if kind == "ugsd":
        return ugsd_pool(n_modes // 2)
    if kind == "sgsd":
        return sgsd_pool(n_modes // 2)
    raise ValueError(f"unknown pool kind {kind!r}")
