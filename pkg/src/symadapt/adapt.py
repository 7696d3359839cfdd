"""ADAPT-VQE outer loop, BFGS inner loop and trough diagnostics."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Mapping

import numpy as np
from scipy.optimize import minimize

from .fci import SpectrumResult
from .pools import OperatorPool
from .simulator import SubspaceEngine, infidelity

log = logging.getLogger(__name__)

TIE_TOL = 1e-12
TRACE_COLUMNS = [
    "iter", "n_params", "op_label", "grad_l2", "grad_linf", "energy",
    "energy_error", "infidelity", "s_squared", "parity", "vqe_iterations",
]


class VQEFailure(RuntimeError):
    pass


@dataclass
class AdaptConfig:
    grad_norm_eps: float = 1e-6
    selection_norm: str = "l2"
    energy_eps: float | None = None
    target_error: float | None = None
    max_operators: int = 100
    vqe_gtol: float = 1e-9
    vqe_max_iter: int = 20000
    trough_patience: int = 3
    trough_infidelity: float = 0.1
    keep_states: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.grad_norm_eps <= 0 or (self.energy_eps is not None and self.energy_eps <= 0):
            raise ValueError("convergence thresholds must be positive")
        if self.max_operators < 1:
            raise ValueError("max_operators must be at least 1")
        if self.selection_norm not in ("l2", "linf"):
            raise ValueError("selection_norm is l2 or linf")


@dataclass
class AdaptProblem:
    """Everything a run needs: Hamiltonian, reference, pool and diagnostics.

    ``observables`` maps names (``parity``, ``s_squared``) to full-space
    operators tracked along the trace; ``exact_state``/``exact_energy`` give
    errors and infidelities.
    """

    hamiltonian: object
    reference: np.ndarray
    pool: OperatorPool
    exact_energy: float | None = None
    exact_state: np.ndarray | None = None
    observables: Mapping[str, object] = field(default_factory=dict)
    units: str = "hartree"
    name: str = ""


@dataclass
class TraceRow:
    iter: int
    n_params: int
    op_label: str
    op_id: int | None
    grad_l2: float
    grad_linf: float
    energy: float
    energy_error: float | None
    infidelity: float | None
    s_squared: float | None
    parity: float | None
    vqe_iterations: int


@dataclass
class AdaptTrace:
    rows: list[TraceRow]
    params: list[float]
    op_ids: list[int]
    converged_by: str
    stalled_in_trough: bool
    config: dict
    units: str = "hartree"
    name: str = ""
    notes: list[str] = field(default_factory=list)
    states: list[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.energy for r in self.rows])

    @property
    def grad_norms(self) -> np.ndarray:
        return np.array([r.grad_l2 for r in self.rows])

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in self.rows], dtype=float)

    def first_params_below(self, error: float) -> int | None:
        """Smallest parameter count whose energy error is below ``error``."""
        for r in self.rows:
            if r.energy_error is not None and r.energy_error < error:
                return r.n_params
        return None

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "states"}
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, default=float)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# energy units: {self.units}\n")
        buf.write("# " + json.dumps({"converged_by": self.converged_by, "stalled_in_trough": self.stalled_in_trough, **self.config}) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for r in self.rows:
            w.writerow(["" if getattr(r, c) is None else _fmt(getattr(r, c)) for c in TRACE_COLUMNS])
        return buf.getvalue()


def _fmt(v):
    return f"{v:.15g}" if isinstance(v, float) else v


def select_operator(gradients) -> tuple[int, float, float]:
    """Index of the largest ``|g_k|`` (lowest index among ties) and the l2/linf norms."""
    g = np.abs(np.asarray(gradients, dtype=float))
    if g.size == 0:
        raise ValueError("empty gradient vector")
    top = g.max()
    idx = int(np.flatnonzero(g >= top - TIE_TOL)[0])
    return idx, float(np.linalg.norm(g)), float(top)


def vqe_minimize(engine: SubspaceEngine, ids: list[int], theta0: np.ndarray, gtol: float = 1e-9,
                 max_iter: int = 20000, seed: int = 0) -> tuple[np.ndarray, float, int, str]:
    """BFGS with analytic gradients from a warm start.

    Returns ``(theta, energy, iterations, status)``.  On failure it restarts
    once from ``theta0`` perturbed uniformly by up to 1e-4.  A run that stops
    on floating-point precision loss is accepted when it did not raise the
    energy; anything else raises :class:`VQEFailure`.
    """
    theta0 = np.asarray(theta0, dtype=float)
    e0 = engine.energy(ids, theta0)
    if len(ids) == 0:
        return theta0, e0, 0, "empty"

    def fun(t):
        return engine.energy_and_gradient(ids, t)

    total = 0
    starts = [theta0, theta0 + np.random.default_rng(seed).uniform(-1e-4, 1e-4, theta0.shape)]
    best = None
    for attempt, start in enumerate(starts):
        res = minimize(fun, start, jac=True, method="BFGS", options={"gtol": gtol, "norm": np.inf, "maxiter": max_iter})
        total += int(res.nit)
        if res.fun <= e0 + 1e-12 and (best is None or res.fun < best.fun):
            best = res
        if res.success:
            return res.x, float(res.fun), total, "converged" if attempt == 0 else "converged_after_restart"
        if "precision" in str(res.message).lower() and res.fun <= e0 + 1e-12:
            return res.x, float(res.fun), total, "precision_limited"
    if best is not None and "precision" in str(best.message).lower():
        return best.x, float(best.fun), total, "precision_limited"
    raise VQEFailure(f"BFGS failed twice: {res.message}")


def run_adapt(problem: AdaptProblem, config: AdaptConfig | None = None) -> AdaptTrace:
    cfg = config or AdaptConfig()
    mats = problem.pool.matrices()
    engine = SubspaceEngine(problem.hamiltonian, mats, problem.reference)
    exact = engine.restrict_state(problem.exact_state) if problem.exact_state is not None else None
    if exact is not None and abs(np.linalg.norm(exact) - 1.0) > 1e-8:
        raise ValueError("exact state is not contained in the reachable subspace")
    obs = {name: engine.restrict(op) for name, op in problem.observables.items()}

    ids: list[int] = []
    theta = np.zeros(0)
    rows: list[TraceRow] = []
    states: list[np.ndarray] = []
    notes: list[str] = []
    low_count = 0
    converged_by = "max_operators"
    stalled = False
    vqe_its = 0
    label = "reference"
    op_id = None
    prev_energy = None
    while True:
        v = engine.state(ids, theta)
        energy = engine.expectation(engine.H, v)
        grads = engine.pool_gradients(v)
        _, l2, linf = select_operator(grads)
        err = abs(energy - problem.exact_energy) if problem.exact_energy is not None else None
        inf = infidelity(v, exact) if exact is not None else None
        rows.append(TraceRow(
            len(rows), len(ids), label, op_id, l2, linf, energy, err, inf,
            engine.expectation(obs["s_squared"], v) if "s_squared" in obs else None,
            engine.expectation(obs["parity"], v) if "parity" in obs else None,
            vqe_its,
        ))
        if cfg.keep_states:
            states.append(engine.embed(v))

        norm = l2 if cfg.selection_norm == "l2" else linf
        if cfg.target_error is not None and err is not None and err < cfg.target_error:
            converged_by = "target_error"
            break
        if norm < cfg.grad_norm_eps:
            if inf is not None and inf > cfg.trough_infidelity:
                low_count += 1
                if low_count >= cfg.trough_patience:
                    stalled = True
                    converged_by = "trough"
                    break
            else:
                converged_by = "gradient"
                break
        else:
            low_count = 0
        if cfg.energy_eps is not None and prev_energy is not None and abs(prev_energy - energy) < cfg.energy_eps:
            converged_by = "energy"
            break
        if len(ids) >= cfg.max_operators:
            converged_by = "max_operators"
            break

        k, _, _ = select_operator(grads)
        ids.append(k)
        label = problem.pool[k].label
        op_id = k
        try:
            theta, _, vqe_its, status = vqe_minimize(
                engine, ids, np.append(theta, 0.0), cfg.vqe_gtol, cfg.vqe_max_iter, cfg.seed + len(ids)
            )
        except VQEFailure as exc:
            notes.append(f"VQE failed at {len(ids)} parameters: {exc}")
            log.error("%s: %s", problem.name, notes[-1])
            converged_by = "vqe_failure"
            ids.pop()
            break
        if status != "converged":
            notes.append(f"{len(ids)} parameters: {status}")
        prev_energy = energy

    conf = asdict(cfg)
    return AdaptTrace(rows, theta.tolist(), list(ids), converged_by, stalled, conf,
                      problem.units, problem.name, notes, states)


@dataclass
class TroughReport:
    weights: np.ndarray
    dominant_contaminant: list[int | None]
    contaminant_weight: np.ndarray
    near_degenerate: list[bool]
    suppression_mass: np.ndarray


def trough_report(trace: AdaptTrace, spectrum: SpectrumResult, degeneracy_fraction: float = 1e-2,
                  min_weight: float = 0.05) -> TroughReport:
    """Decompose every traced state in the exact eigenbasis.

    Flags iterations whose dominant non-ground component carries at least
    ``min_weight`` and lies within ``degeneracy_fraction`` of the spectral
    width above the ground state.  ``suppression_mass`` is
    ``sum_ij |c_i c_j (E_i - E_j)|``.
    """
    if not trace.states:
        raise ValueError("trace carries no states; rerun with keep_states=True")
    basis = spectrum.basis
    if len(trace.states[0]) != 1 << basis.n_modes or spectrum.vectors.shape[1] != basis.dim:
        raise ValueError("spectrum does not match the traced states (need the full sector spectrum)")
    idx = np.array(basis.states, dtype=np.int64)
    E = spectrum.energies
    width = max(E[-1] - E[0], 1e-300)
    weights, dom, cw, flags, mass = [], [], [], [], []
    for psi in trace.states:
        c = spectrum.vectors.conj().T @ psi[idx]
        w = np.abs(c) ** 2
        weights.append(w)
        if len(w) > 1:
            j = int(np.argmax(w[1:]) + 1)
            dom.append(j)
            cw.append(w[j])
            flags.append(bool(w[j] >= min_weight and (E[j] - E[0]) < degeneracy_fraction * width))
        else:
            dom.append(None)
            cw.append(0.0)
            flags.append(False)
        a = np.abs(c)
        mass.append(float(np.sum(np.outer(a, a) * np.abs(E[:, None] - E[None, :]))))
    return TroughReport(np.array(weights), dom, np.array(cw), flags, np.array(mass))
