import json

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from symadapt.adapt import (
    TRACE_COLUMNS,
    AdaptConfig,
    AdaptProblem,
    run_adapt,
    select_operator,
    trough_report,
    vqe_minimize,
)
from symadapt.experiments import prepare_heisenberg
from symadapt.simulator import SubspaceEngine


def test_select_operator_examples():
    assert select_operator([0.1, -0.5, 0.3]) == (1, pytest.approx(np.sqrt(0.35)), 0.5)
    # ties go to the lowest index
    assert select_operator([0.2, -0.4, 0.4])[0] == 1
    assert select_operator([0.4 + 5e-13, 0.4])[0] == 0
    with pytest.raises(ValueError):
        select_operator([])


def test_select_operator_invariant_under_scaling():
    rng = np.random.default_rng(0)
    g = rng.normal(size=30)
    assert select_operator(g)[0] == select_operator(3.7 * g)[0] == select_operator(-g)[0]


def test_config_validation():
    with pytest.raises(ValueError):
        AdaptConfig(grad_norm_eps=0)
    with pytest.raises(ValueError):
        AdaptConfig(max_operators=0)
    with pytest.raises(ValueError):
        AdaptConfig(selection_norm="l1")


@pytest.fixture(scope="module")
def small_chain():
    return prepare_heisenberg(2.0, "local-neel", n_sites=4)


def test_single_parameter_vqe_matches_golden_section(small_chain):
    prob = small_chain.problem
    engine = SubspaceEngine(prob.hamiltonian, prob.pool.matrices(), prob.reference)
    k, _, _ = select_operator(engine.pool_gradients(engine.reference))
    theta, e, _, status = vqe_minimize(engine, [k], np.zeros(1))
    # the energy is a trigonometric polynomial in theta: bracket the global minimum on a grid
    grid = np.linspace(-np.pi, np.pi, 721)
    j = int(np.argmin([engine.energy([k], [t]) for t in grid]))
    ref = minimize_scalar(lambda t: engine.energy([k], [t]), bracket=(grid[j - 1], grid[j], grid[j + 1]),
                          method="golden", tol=1e-10)
    assert status.startswith("converged") or status == "precision_limited"
    assert e == pytest.approx(ref.fun, abs=1e-10)


def test_vqe_returns_stationary_point(small_chain):
    prob = small_chain.problem
    engine = SubspaceEngine(prob.hamiltonian, prob.pool.matrices(), prob.reference)
    ids = [0, 3, 7]
    theta, e, _, _ = vqe_minimize(engine, ids, np.full(3, 0.1))
    _, grad = engine.energy_and_gradient(ids, theta)
    assert np.max(np.abs(grad)) < 1e-6
    _, e2, _, _ = vqe_minimize(engine, ids, theta)
    assert e2 == pytest.approx(e, abs=1e-10)
    assert vqe_minimize(engine, [], np.zeros(0))[3] == "empty"


@pytest.mark.parametrize("setting", ["HF", "local-neel", "salc-cat+"])
def test_short_runs_are_monotone_and_variational(setting):
    prep = prepare_heisenberg(2.0, setting, n_sites=4)
    tr = run_adapt(prep.problem)
    e = tr.energies
    assert np.all(np.diff(e) <= 1e-10)
    assert np.all(e >= prep.spectrum.ground_energy - 1e-10)
    assert tr.converged_by == "gradient"
    assert tr.rows[-1].energy_error < 1e-8
    assert [r.n_params for r in tr.rows] == list(range(len(tr.rows)))


@pytest.mark.parametrize("setting", ["HF", "salc-cat+"])
def test_parity_is_conserved_from_symmetric_reference(setting):
    tr = run_adapt(prepare_heisenberg(2.0, setting, n_sites=4).problem)
    parity = tr.column("parity")
    assert np.allclose(parity, parity[0], atol=1e-9)
    assert abs(abs(parity[0]) - 1) < 1e-9


def test_stopping_rules():
    prob = prepare_heisenberg(2.0, "local-neel", n_sites=4).problem
    assert run_adapt(prob, AdaptConfig(max_operators=2)).converged_by == "max_operators"
    assert len(run_adapt(prob, AdaptConfig(max_operators=2)).op_ids) == 2
    assert run_adapt(prob, AdaptConfig(target_error=1e-3)).converged_by == "target_error"
    assert run_adapt(prob, AdaptConfig(energy_eps=10.0)).converged_by == "energy"


def test_reference_eigenstate_outside_ground_state_stalls():
    # an excited eigenstate has vanishing pool gradients and large infidelity
    prep = prepare_heisenberg(2.0, "HF", n_sites=4)
    prob = prep.problem
    excited = prep.spectrum.state(1)
    stuck = AdaptProblem(prob.hamiltonian, excited, prob.pool, prob.exact_energy, prob.exact_state,
                         prob.observables, prob.units)
    tr = run_adapt(stuck, AdaptConfig(trough_patience=1))
    assert tr.converged_by == "trough"
    assert tr.stalled_in_trough
    assert len(tr.rows) == 1


def test_exact_state_outside_reachable_space_rejected():
    prob = prepare_heisenberg(2.0, "HF", n_sites=4).problem
    bad = np.zeros_like(prob.exact_state)
    bad[0] = 1.0
    with pytest.raises(ValueError):
        run_adapt(AdaptProblem(prob.hamiltonian, prob.reference, prob.pool, prob.exact_energy, bad))


def test_trace_serialization(small_chain):
    tr = run_adapt(small_chain.problem)
    lines = tr.to_csv().splitlines()
    assert lines[0] == "# energy units: |J|"
    header = json.loads(lines[1][2:])
    assert header["converged_by"] == tr.converged_by
    assert header["grad_norm_eps"] == 1e-6
    assert lines[2].split(",") == TRACE_COLUMNS
    assert len(lines) == 3 + len(tr.rows)
    d = json.loads(tr.to_json())
    assert d["op_ids"] == tr.op_ids
    assert "states" not in d
    assert tr.first_params_below(1e-8) == tr.rows[-1].n_params


def test_runs_are_reproducible(small_chain):
    a = run_adapt(small_chain.problem)
    b = run_adapt(small_chain.problem)
    assert a.op_ids == b.op_ids
    assert np.array_equal(a.energies, b.energies)


def test_trough_report_decomposition():
    prep = prepare_heisenberg(2.0, "local-neel", n_sites=4)
    tr = run_adapt(prep.problem)
    rep = trough_report(tr, prep.spectrum)
    assert rep.weights.shape == (len(tr.rows), prep.spectrum.basis.dim)
    assert np.allclose(rep.weights.sum(axis=1), 1.0)
    assert rep.weights[-1, 0] == pytest.approx(1.0, abs=1e-8)
    assert rep.suppression_mass[-1] == pytest.approx(0.0, abs=1e-6)
    with pytest.raises(ValueError):
        trough_report(run_adapt(prep.problem, AdaptConfig(keep_states=False)), prep.spectrum)

