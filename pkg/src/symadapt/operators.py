"""Second-quantized and Pauli operator algebra with the Jordan-Wigner map.

Conventions used throughout the package:

* Qubit/mode ``j`` is the ``j``-th character of a bitstring label, and the
  leftmost character is the most significant bit of the basis-state index,
  so ``|11110000>`` is index ``0b11110000``.
* ``a_j = Z_0 ... Z_{j-1} (X_j + iY_j)/2``; ``|1>`` is an occupied mode.
* Fermion terms are tuples of ``(mode, dagger)`` ladder factors, and are kept
  normal ordered: creations left of annihilations, indices descending inside
  each group.
"""

from __future__ import annotations

import functools
import io
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
import scipy.sparse as sp

PRUNE_TOL = 1e-12

Term = tuple[tuple[int, int], ...]


# --------------------------------------------------------------------------
# normal ordering
# --------------------------------------------------------------------------


def _in_order(left: tuple[int, int], right: tuple[int, int]) -> bool:
    if left[1] != right[1]:
        return left[1] == 1
    return left[0] > right[0]


@functools.lru_cache(maxsize=200_000)
def _normal_order_term(term: Term) -> tuple[tuple[Term, int], ...]:
    """Normal-ordered expansion of a single product as (term, sign) pairs."""
    ops = list(term)
    sign = 1
    for i in range(1, len(ops)):
        for j in range(i, 0, -1):
            left, right = ops[j - 1], ops[j]
            if left[1] == right[1] and left[0] == right[0]:
                return ()
            if _in_order(left, right):
                break
            if left[1] == 0 and right[1] == 1 and left[0] == right[0]:
                # a_p a+_p = 1 - a+_p a_p
                contracted = tuple(ops[: j - 1] + ops[j + 1 :])
                rest = _normal_order_term(tuple(ops[: j - 1] + [right, left] + ops[j + 1 :]))
                out = {}
                for t, s in _normal_order_term(contracted):
                    out[t] = out.get(t, 0) + sign * s
                for t, s in rest:
                    out[t] = out.get(t, 0) - sign * s
                return tuple((t, s) for t, s in out.items() if s != 0)
            ops[j - 1], ops[j] = right, left
            sign = -sign
    return ((tuple(ops), sign),)


def normal_order_terms(terms: Mapping[Term, complex] | Iterable[tuple[Term, complex]]) -> dict[Term, complex]:
    """Expand arbitrary ladder products into canonical normal-ordered terms."""
    items = terms.items() if isinstance(terms, Mapping) else terms
    out: dict[Term, complex] = {}
    for term, coeff in items:
        for t, s in _normal_order_term(tuple((int(m), int(d)) for m, d in term)):
            out[t] = out.get(t, 0.0) + s * coeff
    return out


def _prune(terms: dict, tol: float) -> dict:
    return {k: complex(v) for k, v in terms.items() if abs(v) > tol}


# --------------------------------------------------------------------------
# FermionOperator
# --------------------------------------------------------------------------


class FermionOperator:
    """Weighted sum of ladder-operator products over ``n_modes`` modes.

    Terms are normal ordered on construction, so two operators are equal
    exactly when their term maps agree.
    """

    __slots__ = ("n_modes", "terms", "tol")

    def __init__(self, n_modes: int, terms: Mapping[Term, complex] | None = None, tol: float = PRUNE_TOL):
        self.n_modes = int(n_modes)
        self.tol = tol
        raw = dict(terms or {})
        for term in raw:
            for mode, dag in term:
                if not 0 <= mode < self.n_modes or dag not in (0, 1):
                    raise ValueError(f"invalid ladder factor {(mode, dag)} for {self.n_modes} modes")
        self.terms = _prune(normal_order_terms(raw), tol)

    @classmethod
    def from_string(cls, n_modes: int, label: str, coeff: complex = 1.0) -> "FermionOperator":
        """Build from a label such as ``"3^ 2^ 1 0"``; an empty label is the identity."""
        term = tuple((int(tok.rstrip("^")), int(tok.endswith("^"))) for tok in label.split())
        return cls(n_modes, {term: coeff})

    @classmethod
    def identity(cls, n_modes: int, coeff: complex = 1.0) -> "FermionOperator":
        return cls(n_modes, {(): coeff})

    @staticmethod
    def term_label(term: Term) -> str:
        return " ".join(f"{m}^" if d else f"{m}" for m, d in term) or "1"

    def __repr__(self) -> str:
        body = " + ".join(f"({c:.6g}) [{self.term_label(t)}]" for t, c in sorted(self.terms.items()))
        return f"FermionOperator({self.n_modes}, {body or '0'})"

    def _check(self, other: "FermionOperator") -> None:
        if self.n_modes != other.n_modes:
            raise ValueError("mode-count mismatch")

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = FermionOperator.identity(self.n_modes, other)
        self._check(other)
        out = dict(self.terms)
        for t, c in other.terms.items():
            out[t] = out.get(t, 0.0) + c
        return FermionOperator._raw(self.n_modes, _prune(out, self.tol))

    __radd__ = __add__

    def __neg__(self):
        return FermionOperator._raw(self.n_modes, {t: -c for t, c in self.terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return FermionOperator._raw(self.n_modes, _prune({t: c * other for t, c in self.terms.items()}, self.tol))
        self._check(other)
        raw = ((t1 + t2, c1 * c2) for t1, c1 in self.terms.items() for t2, c2 in other.terms.items())
        return FermionOperator._raw(self.n_modes, _prune(normal_order_terms(raw), self.tol))

    def __rmul__(self, other):
        return self * other

    def __truediv__(self, other):
        return self * (1.0 / other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FermionOperator):
            return NotImplemented
        return self.n_modes == other.n_modes and (self - other).terms == {}

    def isclose(self, other: "FermionOperator", atol: float = 1e-10) -> bool:
        return all(abs(c) <= atol for c in (self - other).terms.values())

    @classmethod
    def _raw(cls, n_modes: int, terms: dict) -> "FermionOperator":
        op = cls.__new__(cls)
        op.n_modes, op.terms, op.tol = n_modes, terms, PRUNE_TOL
        return op

    def dagger(self) -> "FermionOperator":
        raw = ((tuple((m, 1 - d) for m, d in reversed(t)), np.conj(c)) for t, c in self.terms.items())
        return FermionOperator._raw(self.n_modes, _prune(normal_order_terms(raw), self.tol))

    def is_hermitian(self, atol: float = 1e-10) -> bool:
        return self.isclose(self.dagger(), atol)

    def is_anti_hermitian(self, atol: float = 1e-10) -> bool:
        return self.isclose(-self.dagger(), atol)

    def is_zero(self) -> bool:
        return not self.terms

    def constant(self) -> complex:
        return self.terms.get((), 0.0)


def normal_order(op: FermionOperator) -> FermionOperator:
    """Return the canonical normal-ordered form of ``op`` (idempotent)."""
    return FermionOperator(op.n_modes, op.terms, op.tol)


def fermion_commutator(a: FermionOperator, b: FermionOperator) -> FermionOperator:
    return a * b - b * a


def number_operator(n_modes: int, modes: Iterable[int] | None = None) -> FermionOperator:
    modes = range(n_modes) if modes is None else modes
    return FermionOperator(n_modes, {((m, 1), (m, 0)): 1.0 for m in modes})


# --------------------------------------------------------------------------
# PauliOperator
# --------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _label_to_masks(label: str) -> tuple[int, int]:
    n = len(label)
    x = z = 0
    for j, ch in enumerate(label):
        bit = 1 << (n - 1 - j)
        if ch == "X":
            x |= bit
        elif ch == "Y":
            x |= bit
            z |= bit
        elif ch == "Z":
            z |= bit
        elif ch != "I":
            raise ValueError(f"invalid Pauli letter {ch!r}")
    return x, z


@functools.lru_cache(maxsize=None)
def _masks_to_label(n: int, x: int, z: int) -> str:
    letters = []
    for j in range(n):
        bit = 1 << (n - 1 - j)
        letters.append("IZXY"[bool(x & bit) * 2 + bool(z & bit)])
    return "".join(letters)


_I_POW = (1, 1j, -1, -1j)


class PauliOperator:
    """Weighted sum of Pauli strings on ``n_qubits`` qubits.

    Internally each string is a pair of bit masks ``(x, z)`` with the string
    equal to ``i**popcount(x & z) X^x Z^z``.  ``terms`` exposes the usual
    label form, e.g. ``{"XZI": 0.5}``.
    """

    __slots__ = ("n_qubits", "_terms", "tol")

    def __init__(self, n_qubits: int, terms: Mapping[str, complex] | None = None, tol: float = PRUNE_TOL):
        self.n_qubits = int(n_qubits)
        self.tol = tol
        acc: dict[tuple[int, int], complex] = {}
        for label, coeff in (terms or {}).items():
            if len(label) != self.n_qubits:
                raise ValueError(f"label {label!r} does not have {self.n_qubits} letters")
            key = _label_to_masks(label)
            acc[key] = acc.get(key, 0.0) + coeff
        self._terms = _prune(acc, tol)

    @classmethod
    def _raw(cls, n: int, terms: dict) -> "PauliOperator":
        op = cls.__new__(cls)
        op.n_qubits, op._terms, op.tol = n, terms, PRUNE_TOL
        return op

    @classmethod
    def identity(cls, n_qubits: int, coeff: complex = 1.0) -> "PauliOperator":
        return cls._raw(n_qubits, {(0, 0): complex(coeff)})

    @classmethod
    def single(cls, n_qubits: int, letters: Mapping[int, str], coeff: complex = 1.0) -> "PauliOperator":
        """Pauli string with ``letters[qubit]`` on the given qubits and I elsewhere."""
        label = ["I"] * n_qubits
        for q, ch in letters.items():
            label[q] = ch
        return cls(n_qubits, {"".join(label): coeff})

    @property
    def terms(self) -> dict[str, complex]:
        return {_masks_to_label(self.n_qubits, x, z): c for (x, z), c in self._terms.items()}

    def __len__(self) -> int:
        return len(self._terms)

    def __repr__(self) -> str:
        body = " + ".join(f"({c:.6g}) {lab}" for lab, c in sorted(self.terms.items()))
        return f"PauliOperator({self.n_qubits}, {body or '0'})"

    def _check(self, other: "PauliOperator") -> None:
        if self.n_qubits != other.n_qubits:
            raise ValueError(f"qubit-count mismatch: {self.n_qubits} vs {other.n_qubits}")

    def __add__(self, other):
        if isinstance(other, (int, float, complex)):
            other = PauliOperator.identity(self.n_qubits, other)
        self._check(other)
        out = dict(self._terms)
        for k, c in other._terms.items():
            out[k] = out.get(k, 0.0) + c
        return PauliOperator._raw(self.n_qubits, _prune(out, self.tol))

    __radd__ = __add__

    def __neg__(self):
        return PauliOperator._raw(self.n_qubits, {k: -c for k, c in self._terms.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return PauliOperator._raw(self.n_qubits, _prune({k: c * other for k, c in self._terms.items()}, self.tol))
        self._check(other)
        out: dict[tuple[int, int], complex] = {}
        for (x1, z1), c1 in self._terms.items():
            y1 = (x1 & z1).bit_count()
            for (x2, z2), c2 in other._terms.items():
                x3, z3 = x1 ^ x2, z1 ^ z2
                power = y1 + (x2 & z2).bit_count() - (x3 & z3).bit_count() + 2 * (z1 & x2).bit_count()
                key = (x3, z3)
                out[key] = out.get(key, 0.0) + _I_POW[power % 4] * c1 * c2
        return PauliOperator._raw(self.n_qubits, _prune(out, self.tol))

    def __rmul__(self, other):
        return self * other

    def __eq__(self, other) -> bool:
        if not isinstance(other, PauliOperator):
            return NotImplemented
        return self.n_qubits == other.n_qubits and (self - other)._terms == {}

    def isclose(self, other: "PauliOperator", atol: float = 1e-10) -> bool:
        return all(abs(c) <= atol for c in (self - other)._terms.values())

    def dagger(self) -> "PauliOperator":
        return PauliOperator._raw(self.n_qubits, {k: np.conj(c) for k, c in self._terms.items()})

    def is_hermitian(self, atol: float = 1e-10) -> bool:
        return all(abs(c.imag) <= atol for c in self._terms.values())

    def is_anti_hermitian(self, atol: float = 1e-10) -> bool:
        return all(abs(c.real) <= atol for c in self._terms.values())

    def is_zero(self) -> bool:
        return not self._terms

    def to_sparse(self) -> sp.csr_matrix:
        """Matrix in the computational basis (qubit 0 = most significant bit)."""
        dim = 1 << self.n_qubits
        basis = np.arange(dim, dtype=np.int64)
        parity = _popcount_parity(self.n_qubits)
        rows, cols, vals = [], [], []
        for (x, z), c in self._terms.items():
            phase = c * _I_POW[(x & z).bit_count() % 4]
            rows.append(basis ^ x)
            cols.append(basis)
            vals.append(phase * (1 - 2 * parity[basis & z]))
        if not rows:
            return sp.csr_matrix((dim, dim), dtype=complex)
        mat = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim), dtype=complex
        )
        return mat.tocsr()

    def to_dense(self) -> np.ndarray:
        return self.to_sparse().toarray()


@functools.lru_cache(maxsize=None)
def _popcount_parity(n: int) -> np.ndarray:
    idx = np.arange(1 << n)
    par = np.zeros(1 << n, dtype=np.int64)
    for bit in range(n):
        par ^= (idx >> bit) & 1
    return par


def commutator(a: PauliOperator, b: PauliOperator) -> PauliOperator:
    """``ab - ba`` with exact phase tracking."""
    if a.n_qubits != b.n_qubits:
        raise ValueError(f"qubit-count mismatch: {a.n_qubits} vs {b.n_qubits}")
    return a * b - b * a


# --------------------------------------------------------------------------
# Jordan-Wigner
# --------------------------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _jw_ladder(n: int, mode: int, dagger: int) -> PauliOperator:
    zs = {q: "Z" for q in range(mode)}
    xpart = PauliOperator.single(n, {**zs, mode: "X"}, 0.5)
    ypart = PauliOperator.single(n, {**zs, mode: "Y"}, -0.5j if dagger else 0.5j)
    return xpart + ypart


def jordan_wigner(op: FermionOperator) -> PauliOperator:
    """Map a fermion operator to qubits with Z strings on lower-indexed qubits."""
    n = op.n_modes
    out: dict[tuple[int, int], complex] = {}
    for term, coeff in op.terms.items():
        image = PauliOperator.identity(n, coeff)
        for mode, dag in term:
            image = image * _jw_ladder(n, mode, dag)
        for k, c in image._terms.items():
            out[k] = out.get(k, 0.0) + c
    return PauliOperator._raw(n, _prune(out, op.tol))


def fermion_to_sparse(op: FermionOperator) -> sp.csr_matrix:
    return jordan_wigner(op).to_sparse()


# --------------------------------------------------------------------------
# integral sets
# --------------------------------------------------------------------------

FLAVORS = ("spatial", "spin-orbital", "spinless")


@dataclass
class IntegralSet:
    """Constant, one-body and chemist-ordered two-body coefficients.

    ``H = e0 + sum_pq h[p,q] a+_p a_q + 1/2 sum_pqrs g[p,r,q,s] a+_p a+_q a_s a_r``.
    Spin-orbital sets use interleaved ordering (even = alpha, odd = beta).
    """

    n_orb: int
    e0: float
    h: np.ndarray
    g: np.ndarray
    flavor: str = "spatial"
    nelec: int | None = None
    ms2: int | None = None

    def __post_init__(self):
        self.h = np.asarray(self.h)
        self.g = np.asarray(self.g)
        if self.flavor not in FLAVORS:
            raise ValueError(f"unknown flavor {self.flavor!r}")
        n = self.n_orb
        if self.h.shape != (n, n) or self.g.shape != (n, n, n, n):
            raise ValueError("tensor shapes do not match n_orb")
        if not np.allclose(self.h, self.h.conj().T, atol=1e-10):
            raise ValueError("one-body tensor is not Hermitian")
        g = self.g
        if not np.allclose(g, g.transpose(2, 3, 0, 1), atol=1e-10):
            raise ValueError("two-body tensor lacks electron-exchange symmetry")
        if not np.allclose(g, g.transpose(1, 0, 3, 2).conj(), atol=1e-10):
            raise ValueError("two-body tensor lacks Hermitian-pair symmetry")
        if self.flavor == "spatial" and not np.allclose(g, g.transpose(1, 0, 2, 3), atol=1e-10):
            raise ValueError("spatial two-body tensor lacks 8-fold symmetry")

    @property
    def n_modes(self) -> int:
        return 2 * self.n_orb if self.flavor == "spatial" else self.n_orb


def integrals_to_fermion_op(ints: IntegralSet) -> FermionOperator:
    """Second-quantized Hamiltonian over modes (spatial sets are lifted to spin orbitals)."""
    if ints.flavor == "spatial":
        from .molecular import spatial_to_spin_orbital

        ints = spatial_to_spin_orbital(ints)
    n = ints.n_orb
    raw: dict[Term, complex] = {}
    if ints.e0 != 0:
        raw[()] = ints.e0
    for p, q in zip(*np.nonzero(np.abs(ints.h) > PRUNE_TOL)):
        raw[((int(p), 1), (int(q), 0))] = ints.h[p, q]
    for p, r, q, s in zip(*np.nonzero(np.abs(ints.g) > PRUNE_TOL)):
        if p == q or r == s:
            continue
        key = ((int(p), 1), (int(q), 1), (int(s), 0), (int(r), 0))
        raw[key] = raw.get(key, 0.0) + 0.5 * ints.g[p, r, q, s]
    return FermionOperator(n, raw)


def transform_integrals(ints: IntegralSet, C: np.ndarray) -> IntegralSet:
    """Change basis to the orbitals in the columns of ``C`` (no orthogonality check)."""
    C = np.asarray(C)
    h = C.conj().T @ ints.h @ C
    g = np.einsum("ap,br,cq,ds,abcd->prqs", C.conj(), C, C.conj(), C, ints.g, optimize=True)
    real = np.isrealobj(ints.h) and np.isrealobj(ints.g) and np.isrealobj(C)
    if real:
        h, g = h.real, g.real
    eightfold = real and np.allclose(ints.g, ints.g.transpose(1, 0, 2, 3), atol=1e-12)
    h, g = _symmetrize(h, g, eightfold)
    return IntegralSet(C.shape[1], ints.e0, h, g, ints.flavor, ints.nelec, ints.ms2)


def _symmetrize(h: np.ndarray, g: np.ndarray, eightfold: bool) -> tuple[np.ndarray, np.ndarray]:
    """Average away rounding asymmetry; commuting involutions make the result exactly symmetric."""
    h = 0.5 * (h + h.conj().T)
    g = 0.5 * (g + g.transpose(2, 3, 0, 1))
    g = 0.5 * (g + g.transpose(1, 0, 3, 2).conj())
    if eightfold:
        g = 0.5 * (g + g.transpose(1, 0, 2, 3))
    return h, g


def rotate_integrals(ints: IntegralSet, C: np.ndarray, atol: float = 1e-10) -> IntegralSet:
    """Rotate integrals into an orthonormal orbital basis given by the columns of ``C``."""
    C = np.asarray(C)
    if C.shape != (ints.n_orb, ints.n_orb) or not np.allclose(C.conj().T @ C, np.eye(ints.n_orb), atol=atol):
        raise ValueError("orbital coefficient matrix is not unitary")
    return transform_integrals(ints, C)


# --------------------------------------------------------------------------
# line-oriented text format
# --------------------------------------------------------------------------


def dumps_operator(op: PauliOperator | FermionOperator) -> str:
    """One term per line: ``coeff_re coeff_im label``; a header comment records the size."""
    buf = io.StringIO()
    if isinstance(op, PauliOperator):
        buf.write(f"# pauli {op.n_qubits}\n")
        items = sorted(op.terms.items())
    else:
        buf.write(f"# fermion {op.n_modes}\n")
        items = sorted((FermionOperator.term_label(t), c) for t, c in op.terms.items())
    for label, c in items:
        buf.write(f"{c.real:.17g} {c.imag:.17g} {label}\n")
    return buf.getvalue()


def loads_operator(text: str) -> PauliOperator | FermionOperator:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ValueError("missing operator header line")
    kind, size = lines[0][1:].split()
    size = int(size)
    if kind == "pauli":
        terms: dict = {}
        for ln in lines[1:]:
            re_, im_, label = ln.split()
            terms[label] = terms.get(label, 0) + complex(float(re_), float(im_))
        return PauliOperator(size, terms)
    if kind == "fermion":
        op = FermionOperator(size)
        for ln in lines[1:]:
            re_, im_, *label = ln.split()
            lab = " ".join(label)
            op = op + FermionOperator.from_string(size, "" if lab == "1" else lab, complex(float(re_), float(im_)))
        return op
    raise ValueError(f"unknown operator kind {kind!r}")
