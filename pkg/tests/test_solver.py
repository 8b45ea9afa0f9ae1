import numpy as np
import pytest
from scipy.optimize import minimize

from plapreg.diagnostics import run_diagnostics
from plapreg.solver import (
    InnerSolveError,
    SolverOptions,
    continuation_run,
    fixed_point_solve,
    minimize_energy,
    monolithic_solve,
    solve,
)
from plapreg.system import DiscreteState, energy, full_residual, recover_u, with_eps

from conftest import make_instance, random_interior_field

TIGHT = SolverOptions(inner_tol=1e-12, outer_tol=1e-11)


def test_options_validation():
    with pytest.raises(ValueError):
        SolverOptions(inner_tol=0.0)
    with pytest.raises(ValueError):
        SolverOptions(damping=1.5)
    with pytest.raises(ValueError):
        SolverOptions(strategy="secant")
    with pytest.raises(ValueError):
        SolverOptions(max_outer=0)


def test_minimize_energy_zero_load(rng):
    inst = make_instance(diracs=(), eps=0.2)
    start = random_interior_field(inst.mesh, rng)
    fz = random_interior_field(inst.mesh, rng)
    w = minimize_energy(inst, fz, start, TIGHT)
    assert np.abs(w).max() < 1e-9


def test_minimize_energy_monotone_history():
    inst = make_instance(refinement=4, eps=0.1)
    hist = []
    start = np.zeros(inst.mesh.n_nodes)
    minimize_energy(inst, start, start, TIGHT, history=hist)
    assert len(hist) >= 2
    assert all(b <= a + 1e-13 * (1.0 + abs(a)) for a, b in zip(hist, hist[1:]))


def test_minimize_energy_matches_derivative_free_oracle():
    inst = make_instance(refinement=3, eps=0.1, preset="stefan", ac=0.4)
    frozen = np.zeros(inst.mesh.n_nodes)
    w = minimize_energy(inst, frozen, frozen, TIGHT)
    interior = inst.mesh.interior

    def obj(x):
        full = np.zeros(inst.mesh.n_nodes)
        full[interior] = x
        return energy(inst, frozen, full)

    res = minimize(obj, np.zeros(interior.size), method="Powell",
                   options={"xtol": 1e-12, "ftol": 1e-14, "maxiter": 20000})
    assert np.abs(w[interior] - res.x).max() < 1e-6


def test_minimize_energy_iteration_cap():
    inst = make_instance(refinement=4, eps=0.1)
    start = np.zeros(inst.mesh.n_nodes)
    with pytest.raises(InnerSolveError) as err:
        minimize_energy(inst, start, start, SolverOptions(inner_tol=1e-12, max_inner=1))
    assert err.value.residual_norm > 0.0


def test_fixed_point_trivial():
    inst = make_instance(diracs=(), eps=0.1)
    state, report = fixed_point_solve(inst, TIGHT)
    assert report.converged and report.outer_iters == 1
    assert np.all(state.transformed == 0.0)


def test_solvers_agree(rng):
    inst = make_instance(refinement=2, eps=0.05)
    s1, r1 = fixed_point_solve(inst, TIGHT)
    s2, r2 = monolithic_solve(inst, TIGHT)
    assert r1.converged and r2.converged
    tol = 10.0 * max(TIGHT.inner_tol, TIGHT.outer_tol)
    assert np.abs(s1.transformed - s2.transformed).max() <= 10.0 * 1e-6  # certificate window
    assert np.abs(s1.transformed - s2.transformed).max() <= 1e-6


def test_damping_invariance_stefan():
    inst = make_instance(refinement=3, preset="stefan", eps=0.1, ac=-0.5)
    s1, r1 = fixed_point_solve(inst, SolverOptions(inner_tol=1e-12, outer_tol=1e-11, damping=1.0))
    s2, r2 = fixed_point_solve(inst, SolverOptions(inner_tol=1e-12, outer_tol=1e-11, damping=0.5))
    assert r1.converged and r2.converged
    assert np.abs(s1.transformed - s2.transformed).max() < 1e-8


def test_convergence_certificate():
    inst = make_instance(refinement=4, preset="richards", eps=0.2, ac=0.8)
    for runner in (fixed_point_solve, monolithic_solve):
        state, report = runner(inst, TIGHT)
        assert report.converged
        fr = full_residual(inst, state)
        assert np.abs(fr[inst.mesh.interior]).max() <= 10.0 * TIGHT.inner_tol


def test_monolithic_local_quadratic_convergence():
    # smooth density, linear preset: the exact-linearization Newton path
    # contracts superlinearly once inside the attraction basin
    inst = make_instance(refinement=6, diracs=(), ac=1.0, eps=0.1)
    _, report = monolithic_solve(inst, SolverOptions(inner_tol=1e-13))
    hist = [r for r in report.residual_history if r > 0.0]
    tail = hist[-3:]
    orders = [
        np.log(tail[i + 1] / tail[i]) / np.log(tail[i] / tail[i - 1])
        for i in range(1, len(tail) - 1)
        if tail[i] < tail[i - 1]
    ]
    assert report.converged
    assert max(orders, default=2.0) >= 1.5


def test_nonconvergence_reported_not_raised():
    inst = make_instance(refinement=4, preset="stefan", eps=0.05, ac=-1.0)
    state, report = fixed_point_solve(inst, SolverOptions(inner_tol=1e-13, outer_tol=1e-13, max_outer=2))
    assert not report.converged
    assert "damping" in report.hint or "cap" in report.hint
    assert len(report.residual_history) >= 1


def test_solve_dispatch():
    inst = make_instance(refinement=2, eps=0.1)
    s1, r1 = solve(inst, SolverOptions(strategy="fixed_point"))
    s2, r2 = solve(inst, SolverOptions(strategy="monolithic"))
    assert r1.strategy == "fixed_point" and r2.strategy == "monolithic"


def test_cg_linear_solver_matches_direct():
    inst = make_instance(refinement=4, eps=0.1)
    s1, r1 = fixed_point_solve(inst, SolverOptions(inner_tol=1e-11, outer_tol=1e-10, linear_solver="cg"))
    s2, r2 = fixed_point_solve(inst, SolverOptions(inner_tol=1e-11, outer_tol=1e-10))
    assert r1.converged and r2.converged
    assert np.abs(s1.transformed - s2.transformed).max() < 1e-7


def test_determinism():
    inst = make_instance(refinement=4, preset="stefan", eps=0.1, ac=-0.3)
    s1, _ = monolithic_solve(inst, TIGHT)
    s2, _ = monolithic_solve(inst, TIGHT)
    assert np.array_equal(s1.transformed, s2.transformed)


def test_continuation_single_entry_is_single_solve():
    inst = make_instance(refinement=3, eps=0.1)
    results = continuation_run(inst, [0.1], TIGHT)
    assert len(results) == 1
    eps, state, report = results[0]
    ref_state, _ = fixed_point_solve(inst, TIGHT)
    assert eps == 0.1
    assert np.abs(state.transformed - ref_state.transformed).max() < 1e-10
    assert report.diagnostics is not None


def test_continuation_schedule_validation():
    inst = make_instance(refinement=2, eps=0.1)
    with pytest.raises(ValueError):
        continuation_run(inst, [], TIGHT)
    with pytest.raises(ValueError):
        continuation_run(inst, [0.1, 0.2], TIGHT)
    with pytest.raises(ValueError):
        continuation_run(inst, [0.1, -0.01], TIGHT)


def test_continuation_warm_start_and_diags():
    inst = make_instance(refinement=4, preset="stefan", eps=0.1, ac=-1.0)
    results = continuation_run(inst, [0.1, 0.03, 0.01], SolverOptions(strategy="monolithic"))
    assert len(results) == 3
    assert all(rep.converged for _, _, rep in results)
    for eps, state, rep in results:
        mg = [c for c in rep.diagnostics.checks if c.name == "minty_gap"][0]
        assert mg.passed


def test_continuation_on_failure_modes():
    inst = make_instance(refinement=4, preset="stefan", eps=0.1, ac=-1.0)
    crippled = SolverOptions(inner_tol=1e-13, outer_tol=1e-14, max_outer=1)
    res_abort = continuation_run(inst, [0.1, 0.05], crippled, on_failure="abort")
    assert len(res_abort) == 1 and not res_abort[0][2].converged
    res_cont = continuation_run(inst, [0.1, 0.05], crippled, on_failure="continue")
    assert len(res_cont) == 2


def test_apriori_bound_on_converged_states():
    # the recorded a-priori slack stays within its budget on these instances
    for preset, ac in (("linear", None), ("stefan", -0.5)):
        inst = make_instance(refinement=5, preset=preset, eps=0.1, ac=ac)
        state, report = monolithic_solve(inst, TIGHT)
        assert report.converged
        rec = run_diagnostics(inst, state)
        check = [c for c in rec.checks if c.name == "apriori_bound"][0]
        assert check.slack <= 1.05
