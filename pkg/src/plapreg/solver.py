"""Convex subproblem minimization, the fixed-point outer loop, a Newton path,
and the continuation driver over decreasing regularization strengths.

The fixed-point strategy realizes the map that sends a frozen field to the
minimizer of the associated strictly convex energy; Picard iteration on that
map has no contraction guarantee, so the loop damps automatically and a
stalled run is reported, never silently accepted.  The monolithic strategy
runs damped Newton on the full nonlinear residual with an exact linearization
and falls back to a fixed-point sweep when a step fails to reduce the
residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .system import (
    DiscreteState,
    FrozenCoefficients,
    ProblemInstance,
    energy_from_coeffs,
    frozen_coefficients,
    full_jacobian,
    full_residual,
    jacobian_from_coeffs,
    residual_from_coeffs,
    with_eps,
)

__all__ = [
    "SolverOptions",
    "SolveReport",
    "InnerSolveError",
    "minimize_energy",
    "fixed_point_solve",
    "monolithic_solve",
    "solve",
    "continuation_run",
]

STRATEGIES = ("fixed_point", "monolithic")


@dataclass(frozen=True)
class SolverOptions:
    inner_tol: float = 1e-10
    outer_tol: float = 1e-9
    max_inner: int = 60
    max_outer: int = 200
    damping: float = 1.0
    strategy: str = "fixed_point"
    linear_solver: str = "direct"

    def __post_init__(self) -> None:
        if self.inner_tol <= 0.0 or self.outer_tol <= 0.0:
            raise ValueError("tolerances must be strictly positive")
        if self.max_inner < 1 or self.max_outer < 1:
            raise ValueError("iteration caps must be at least 1")
        if not (0.0 < self.damping <= 1.0):
            raise ValueError("damping must lie in (0, 1]")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.linear_solver not in ("direct", "cg"):
            raise ValueError("linear_solver must be 'direct' or 'cg'")


@dataclass
class SolveReport:
    converged: bool
    outer_iters: int
    total_inner_iters: int
    residual_history: list
    energy_history: list
    strategy: str
    hint: str = ""
    diagnostics: object = None


class InnerSolveError(RuntimeError):
    """The convex subproblem did not reach its tolerance; carries the last residual."""

    def __init__(self, residual_norm: float, iterations: int):
        super().__init__(
            f"inner minimization stalled after {iterations} iterations "
            f"(residual {residual_norm:.3e})"
        )
        self.residual_norm = residual_norm
        self.iterations = iterations


def _linear_solve(mat: sp.csr_matrix, rhs: np.ndarray, opts: SolverOptions, symmetric: bool) -> np.ndarray:
    if opts.linear_solver == "cg" and symmetric:
        diag = mat.diagonal()
        precond = spla.LinearOperator(mat.shape, lambda x: x / np.where(diag > 0.0, diag, 1.0))
        sol, info = spla.cg(mat, rhs, rtol=0.0, atol=0.1 * opts.inner_tol, M=precond, maxiter=20 * mat.shape[0])
        if info != 0:
            sol = spla.spsolve(mat.tocsc(), rhs)
        return sol
    return spla.splu(mat.tocsc()).solve(rhs)


def minimize_energy(inst: ProblemInstance, frozen, start, opts: SolverOptions, history: list | None = None) -> np.ndarray:
    """Newton minimization of the frozen-coefficient energy with backtracking.

    Returns the minimizer with residual below ``opts.inner_tol`` in the
    max norm; raises ``InnerSolveError`` carrying the achieved residual when
    the iteration cap is hit.
    """
    frozen = np.asarray(frozen, dtype=float)
    w = np.asarray(start, dtype=float).copy()
    coeffs = frozen_coefficients(inst, frozen)
    interior = inst.mesh.interior
    e_cur = energy_from_coeffs(inst, coeffs, w)
    if history is not None:
        history.append(e_cur)
    r = residual_from_coeffs(inst, coeffs, w)
    rn = float(np.abs(r[interior]).max(initial=0.0))
    for it in range(opts.max_inner):
        if rn <= opts.inner_tol:
            return w
        jac = jacobian_from_coeffs(inst, coeffs, w)
        sub = jac[np.ix_(interior, interior)].tocsc()
        d_int = _linear_solve(sub, -r[interior], opts, symmetric=True)
        d = np.zeros_like(w)
        d[interior] = d_int
        slope = float(np.dot(r[interior], d_int))
        t = 1.0
        accepted = False
        for _ in range(60):
            trial = w + t * d
            e_trial = energy_from_coeffs(inst, coeffs, trial)
            if e_trial <= e_cur + 1e-4 * t * slope + 1e-14 * (1.0 + abs(e_cur)):
                w, e_cur = trial, e_trial
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # energy differences at floating point resolution: judge the full
            # step by the residual norm instead
            trial = w + d
            r_trial = residual_from_coeffs(inst, coeffs, trial)
            rn_trial = float(np.abs(r_trial[interior]).max(initial=0.0))
            if rn_trial >= rn:
                raise InnerSolveError(rn, it + 1)
            w = trial
            e_cur = energy_from_coeffs(inst, coeffs, trial)
            r, rn = r_trial, rn_trial
            if history is not None:
                history.append(e_cur)
            continue
        if history is not None:
            history.append(e_cur)
        r = residual_from_coeffs(inst, coeffs, w)
        rn = float(np.abs(r[interior]).max(initial=0.0))
    if rn <= opts.inner_tol:
        return w
    raise InnerSolveError(rn, opts.max_inner)


def _start_field(inst: ProblemInstance, start) -> np.ndarray:
    if start is None:
        return np.zeros(inst.mesh.n_nodes)
    arr = np.asarray(start, dtype=float).copy()
    arr[inst.mesh.boundary] = 0.0
    return arr


NONCONVERGENCE_HINT = "reduce damping, increase eps, or refine the continuation schedule"


def fixed_point_solve(inst: ProblemInstance, opts: SolverOptions | None = None, start=None) -> tuple[DiscreteState, SolveReport]:
    """Damped Picard iteration on the frozen-coefficient minimization map.

    Convergence requires both a small iterate increment and a small full
    nonlinear residual; a stalled iteration is a legal outcome reported with
    ``converged=False`` and a hint.
    """
    opts = opts or SolverOptions()
    interior = inst.mesh.interior
    z = _start_field(inst, start)
    state = DiscreteState(z)
    fr = full_residual(inst, state)
    frn = float(np.abs(fr[interior]).max(initial=0.0))
    residual_history = [frn]
    energy_history = [energy_from_coeffs(inst, frozen_coefficients(inst, z), z)]
    theta = opts.damping
    inner_total = 0
    for k in range(1, opts.max_outer + 1):
        inner_hist: list = []
        try:
            target = minimize_energy(inst, z, z, opts, history=inner_hist)
        except InnerSolveError as exc:
            report = SolveReport(
                converged=False,
                outer_iters=k,
                total_inner_iters=inner_total + exc.iterations,
                residual_history=residual_history,
                energy_history=energy_history,
                strategy="fixed_point",
                hint=f"{exc}; {NONCONVERGENCE_HINT}",
            )
            return DiscreteState(z), report
        inner_total += max(len(inner_hist) - 1, 1)
        step = target - z
        while True:
            candidate = z + theta * step
            cand_state = DiscreteState(candidate)
            frn_new = float(np.abs(full_residual(inst, cand_state)[interior]).max(initial=0.0))
            if frn_new <= frn or theta <= 1.0 / 64.0:
                break
            theta *= 0.5
        increment = float(np.abs(candidate - z).max(initial=0.0))
        z = candidate
        frn = frn_new
        residual_history.append(frn)
        energy_history.append(energy_from_coeffs(inst, frozen_coefficients(inst, z), z))
        theta = min(opts.damping, theta * 2.0)
        if increment <= opts.outer_tol and frn <= 10.0 * opts.inner_tol:
            report = SolveReport(
                converged=True,
                outer_iters=k,
                total_inner_iters=inner_total,
                residual_history=residual_history,
                energy_history=energy_history,
                strategy="fixed_point",
            )
            return DiscreteState(z), report
    report = SolveReport(
        converged=False,
        outer_iters=opts.max_outer,
        total_inner_iters=inner_total,
        residual_history=residual_history,
        energy_history=energy_history,
        strategy="fixed_point",
        hint=f"outer iteration cap reached; {NONCONVERGENCE_HINT}",
    )
    return DiscreteState(z), report


def monolithic_solve(inst: ProblemInstance, opts: SolverOptions | None = None, start=None) -> tuple[DiscreteState, SolveReport]:
    """Damped Newton on the full nonlinear residual with residual-norm line search.

    Uses the exact linearization; when a Newton step cannot reduce the
    residual the iteration falls back to one fixed-point sweep before giving
    up, and convergence carries the same certificate as the fixed-point path.
    """
    opts = opts or SolverOptions()
    interior = inst.mesh.interior
    z = _start_field(inst, start)
    state = DiscreteState(z)
    r = full_residual(inst, state)
    rn = float(np.abs(r[interior]).max(initial=0.0))
    residual_history = [rn]
    energy_history = [energy_from_coeffs(inst, frozen_coefficients(inst, z), z)]
    inner_total = 0
    converged = rn <= opts.inner_tol
    hint = ""
    outer = 0
    while not converged and outer < opts.max_outer:
        outer += 1
        jac = full_jacobian(inst, DiscreteState(z))
        sub = jac[np.ix_(interior, interior)].tocsc()
        try:
            d_int = spla.splu(sub).solve(-r[interior])
        except RuntimeError:
            d_int = None
        accepted = False
        if d_int is not None and np.all(np.isfinite(d_int)):
            d = np.zeros_like(z)
            d[interior] = opts.damping * d_int
            t = 1.0
            for _ in range(40):
                trial = z + t * d
                r_trial = full_residual(inst, DiscreteState(trial))
                rn_trial = float(np.abs(r_trial[interior]).max(initial=0.0))
                if rn_trial <= (1.0 - 1e-4 * t) * rn:
                    z, r, rn = trial, r_trial, rn_trial
                    accepted = True
                    inner_total += 1
                    break
                t *= 0.5
        if not accepted:
            # Newton step rejected: one fixed-point sweep as a safeguard
            inner_hist: list = []
            try:
                target = minimize_energy(inst, z, z, opts, history=inner_hist)
            except InnerSolveError as exc:
                hint = f"Newton stalled and the safeguard sweep failed ({exc}); {NONCONVERGENCE_HINT}"
                break
            inner_total += max(len(inner_hist) - 1, 1)
            trial = 0.5 * (z + target)
            r_trial = full_residual(inst, DiscreteState(trial))
            rn_trial = float(np.abs(r_trial[interior]).max(initial=0.0))
            if rn_trial >= rn and float(np.abs(trial - z).max(initial=0.0)) <= 1e-15 * (1.0 + float(np.abs(z).max(initial=0.0))):
                hint = f"stationary non-converged point (residual {rn:.3e}); {NONCONVERGENCE_HINT}"
                break
            z, r, rn = trial, r_trial, rn_trial
        residual_history.append(rn)
        energy_history.append(energy_from_coeffs(inst, frozen_coefficients(inst, z), z))
        converged = rn <= opts.inner_tol
    if not converged and not hint:
        hint = f"outer iteration cap reached (residual {rn:.3e}); {NONCONVERGENCE_HINT}"
    report = SolveReport(
        converged=converged,
        outer_iters=outer,
        total_inner_iters=inner_total,
        residual_history=residual_history,
        energy_history=energy_history,
        strategy="monolithic",
        hint="" if converged else hint,
    )
    return DiscreteState(z), report


def solve(inst: ProblemInstance, opts: SolverOptions | None = None, start=None) -> tuple[DiscreteState, SolveReport]:
    opts = opts or SolverOptions()
    if opts.strategy == "monolithic":
        return monolithic_solve(inst, opts, start)
    return fixed_point_solve(inst, opts, start)


def continuation_run(
    base_inst: ProblemInstance,
    eps_schedule,
    opts: SolverOptions | None = None,
    diagnostics_opts=None,
    on_failure: str = "abort",
) -> list[tuple[float, DiscreteState, SolveReport]]:
    """Solve along a strictly decreasing schedule of regularization strengths.

    The transformed unknown does not depend on eps, so each solve warm-starts
    from the previous state.  Per-step diagnostics are always attached.
    Non-convergence either aborts the run or, with ``on_failure='continue'``,
    is recorded and the sweep moves on.
    """
    from .diagnostics import run_diagnostics

    schedule = [float(e) for e in eps_schedule]
    if not schedule:
        raise ValueError("eps schedule must be non-empty")
    if any(not (math.isfinite(e) and e > 0.0) for e in schedule):
        raise ValueError("eps schedule entries must be finite and > 0")
    if any(b >= a for a, b in zip(schedule, schedule[1:])):
        raise ValueError("eps schedule must be strictly decreasing")
    if on_failure not in ("abort", "continue"):
        raise ValueError("on_failure must be 'abort' or 'continue'")
    opts = opts or SolverOptions()
    results: list[tuple[float, DiscreteState, SolveReport]] = []
    warm = None
    for eps in schedule:
        inst = with_eps(base_inst, eps)
        state, report = solve(inst, opts, start=warm)
        report.diagnostics = run_diagnostics(inst, state, diagnostics_opts)
        results.append((eps, state, report))
        if report.converged:
            warm = state.transformed
        elif on_failure == "abort":
            break
    return results
