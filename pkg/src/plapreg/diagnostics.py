"""Numerical verification of the a-priori estimates attached to each solve.

Each check recomputes both sides of one proved inequality from the discrete
solution.  Nonlinear functions of the solution are evaluated from nodal
values, with per-triangle means inside gradient weights; the interpolation
error this introduces is covered by a reported slack budget (default 1.1),
never by a hidden constant.  Checks that are exact discrete Hoelder or
algebraic identities carry no budget at all.  A failing check raises nothing:
it sets a flag and stays in the record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernel import squash_deriv, truncate
from .measures import MeasureError
from .mesh import TriangleMesh
from .system import (
    DiscreteState,
    ProblemInstance,
    frozen_coefficients,
    recover_b,
    recover_u,
    recover_v,
    validate_state,
)

__all__ = [
    "CheckResult",
    "DiagnosticsOptions",
    "DiagnosticsRecord",
    "chi_energy_check",
    "weighted_plap_check",
    "sobolev_family_norms",
    "holder_chain_check",
    "tk_gradient_check",
    "vanishing_term_probe",
    "entropy_residual",
    "minty_consistency",
    "apriori_bound_check",
    "default_test_fields",
    "bump_field",
    "run_diagnostics",
]


@dataclass(frozen=True)
class DiagnosticsOptions:
    q_values: tuple = (1.2, 1.5, 1.8)
    k_values: tuple = (0.1, 1.0, 10.0)
    slack_budget: float = 1.1
    minty_tol: float = 1e-8
    entropy_budget: float = 10.0   # linear-in-h envelope factor for the entropy flag
    diff_norm_q: float = 1.5       # exponent q behind the sweep difference norm q/(2-q)

    def __post_init__(self) -> None:
        if any(not (1.0 < q < 2.0) for q in self.q_values):
            raise ValueError("q values must lie in (1, 2)")
        if any(k <= 0.0 for k in self.k_values):
            raise ValueError("truncation levels must be positive")
        if self.slack_budget < 1.0:
            raise ValueError("slack budget below 1 would reject the exact inequality")


DEFAULT_DIAGNOSTICS = DiagnosticsOptions()


@dataclass
class CheckResult:
    name: str
    value: float
    bound: float
    slack: float
    passed: bool | None        # None marks a purely informational entry
    detail: str = ""


@dataclass
class DiagnosticsRecord:
    chi_energy: float
    weighted_plap: float
    wq_norms: dict
    lqhat_norms: dict
    inv_psi_norm: float
    tk_checks: list
    vanish_probe: list
    entropy_residuals: list
    minty_gap: float
    v_l1: float
    apriori_slack: float
    checks: list = field(default_factory=list)

    @property
    def flags(self) -> dict:
        return {c.name: c.passed for c in self.checks if c.passed is not None}

    @property
    def all_passed(self) -> bool:
        return all(v for v in self.flags.values())

    def rows(self) -> list:
        """One (name, value, bound, slack, passed, detail) row per check, CSV-ready."""
        out = []
        for c in self.checks:
            passed = "" if c.passed is None else str(bool(c.passed)).lower()
            out.append((c.name, c.value, c.bound, c.slack, passed, c.detail))
        return out


def _slack(lhs: float, rhs: float) -> float:
    if rhs > 0.0:
        return lhs / rhs
    return 0.0 if lhs <= 1e-300 else math.inf


def q_hat(q: float) -> float:
    """Companion exponent q / (2 - q) of a gradient exponent q in (1, 2)."""
    if not (1.0 < q < 2.0):
        raise ValueError(f"q must lie in (1, 2), got {q!r}")
    return q / (2.0 - q)


def broken_grad_norm(mesh: TriangleMesh, nodal: np.ndarray, q: float) -> float:
    g = mesh.gradients(nodal)
    gn = np.hypot(g[:, 0], g[:, 1])
    return float(np.dot(mesh.areas, gn**q) ** (1.0 / q))


def lumped_norm(mesh: TriangleMesh, nodal: np.ndarray, q: float) -> float:
    return float(np.dot(mesh.lumped_mass, np.abs(nodal) ** q) ** (1.0 / q))


def _chi_energy_value(inst: ProblemInstance, u: np.ndarray) -> float:
    mesh = inst.mesh
    g = mesh.gradients(u)
    w = squash_deriv(mesh.tri_mean(u))
    return float(np.dot(mesh.areas * w, np.einsum("td,td->t", g, g)))


def chi_energy_check(inst: ProblemInstance, u: np.ndarray, budget: float = 1.1) -> CheckResult:
    """Weighted Dirichlet energy against the measure norm.

    lhs = lambda_lo * sum_T |T| w(mean u) |grad u|^2 with w the squash
    derivative; the proved bound is lhs <= measure norm, checked with the
    interpolation slack budget.
    """
    lhs = inst.diffusion.lambda_lo * _chi_energy_value(inst, u)
    rhs = inst.rhs_norm
    s = _slack(lhs, rhs)
    return CheckResult("chi_energy", lhs, rhs, s, s <= budget, "weighted H1 energy vs measure norm")


def weighted_plap_check(inst: ProblemInstance, u: np.ndarray, budget: float = 1.1) -> CheckResult:
    """Vanishing-term energy  eps * sum |T| w^(p-1) |grad u|^p  against the measure norm."""
    mesh = inst.mesh
    g = mesh.gradients(u)
    gn = np.hypot(g[:, 0], g[:, 1])
    w = squash_deriv(mesh.tri_mean(u))
    lhs = inst.eps * float(np.dot(mesh.areas, w ** (inst.p - 1.0) * gn**inst.p))
    rhs = inst.rhs_norm
    s = _slack(lhs, rhs)
    return CheckResult("weighted_plap", lhs, rhs, s, s <= budget, "weighted p-energy vs measure norm")


def sobolev_family_norms(inst: ProblemInstance, u: np.ndarray, q_values) -> tuple[dict, dict, dict]:
    """Gradient q-norms, solution q_hat-norms, and inverse-weight q_hat-norms.

    Rejects q outside (1, 2); the companion exponent is q/(2-q).
    """
    wq, lqh, inv = {}, {}, {}
    for q in q_values:
        qh = q_hat(q)
        wq[q] = broken_grad_norm(inst.mesh, u, q)
        lqh[q] = lumped_norm(inst.mesh, u, qh)
        inv[q] = lumped_norm(inst.mesh, 1.0 / squash_deriv(u), qh)
    return wq, lqh, inv


def holder_chain_check(inst: ProblemInstance, u: np.ndarray, q: float) -> CheckResult:
    """Exact discrete Hoelder splitting of the gradient q-norm.

    With matching per-triangle quadrature on both sides the inequality
    ||grad u||_q^q <= (weighted energy)^(q/2) * (elementwise inverse-weight
    integral)^((2-q)/2) is exact, so the budget is a pure rounding guard.
    """
    mesh = inst.mesh
    qh = q_hat(q)
    g = mesh.gradients(u)
    gn = np.hypot(g[:, 0], g[:, 1])
    w = squash_deriv(mesh.tri_mean(u))
    lhs = float(np.dot(mesh.areas, gn**q))
    chi = float(np.dot(mesh.areas * w, gn**2))
    invq = float(np.dot(mesh.areas, w ** (-qh)))
    rhs = chi ** (q / 2.0) * invq ** ((2.0 - q) / 2.0)
    s = _slack(lhs, rhs)
    return CheckResult(f"holder_chain_q{q:g}", lhs, rhs, s, s <= 1.0 + 1e-10, "exact discrete Hoelder")


def tk_gradient_check(inst: ProblemInstance, u: np.ndarray, k: float, budget: float = 1.1) -> tuple[CheckResult, float]:
    """Truncated-gradient energy against the weighted energy over the level k.

    The clean version restricts to triangles with all nodal values inside
    [-k, k], where the truncation is the identity and the bound is exact; the
    full-triangle value (gradient of the truncated interpolant everywhere) is
    returned alongside for the record.
    """
    mesh = inst.mesh
    g = mesh.gradients(u)
    gn2 = np.einsum("td,td->t", g, g)
    clean = np.all(np.abs(u[mesh.triangles]) <= k, axis=1)
    lhs_clean = float(np.dot(mesh.areas[clean], gn2[clean]))
    tk = truncate(u, k)
    gt = mesh.gradients(tk)
    lhs_full = float(np.dot(mesh.areas, np.einsum("td,td->t", gt, gt)))
    bound = _chi_energy_value(inst, u) / squash_deriv(k)
    s = _slack(lhs_clean, bound)
    res = CheckResult(
        f"tk_gradient_k{k:g}", lhs_clean, bound, s, s <= budget,
        f"clean-triangle truncation energy; full-triangle value {lhs_full:.6e}",
    )
    return res, lhs_full


def vanishing_term_probe(inst: ProblemInstance, u: np.ndarray, test_fields: dict) -> list[CheckResult]:
    """Size of the regularizing term against its Hoelder bound, per test field.

    value = eps * sum |T| w^(p-2) |g|^(p-2) g . grad w_test and
    bound = max|grad w_test| * eps^(1/p) * (sum |T|/w)^(1/p) * (weighted
    p-energy)^((p-1)/p); with matching quadrature the bound is exact.
    """
    mesh = inst.mesh
    p = inst.p
    g = mesh.gradients(u)
    gn = np.hypot(g[:, 0], g[:, 1])
    w = squash_deriv(mesh.tri_mean(u))
    wp_term = inst.eps * float(np.dot(mesh.areas, w ** (p - 1.0) * gn**p))
    inv_int = float(np.dot(mesh.areas, 1.0 / w))
    flux = (w ** (p - 2.0) * gn ** (p - 2.0))[:, None] * g
    out = []
    for name, field_w in test_fields.items():
        gw = mesh.gradients(field_w)
        value = inst.eps * float(np.dot(mesh.areas, np.einsum("td,td->t", flux, gw)))
        grad_inf = float(np.max(np.hypot(gw[:, 0], gw[:, 1]), initial=0.0))
        bound = grad_inf * inst.eps ** (1.0 / p) * inv_int ** (1.0 / p) * wp_term ** ((p - 1.0) / p)
        s = _slack(abs(value), bound)
        out.append(CheckResult(f"vanishing_{name}", value, bound, s, s <= 1.0 + 1e-10, "exact discrete Hoelder"))
    return out


def entropy_residual(inst: ProblemInstance, u: np.ndarray, b: np.ndarray, phi: np.ndarray, k: float) -> float:
    """Signed entropy residual for an absolutely continuous right-hand side.

    residual = sum b T m + sum |T| rho Lambda grad(z) . grad(T) - sum f T
    with T the nodewise truncation of u - phi at level k and z the transformed
    field; the gradient factor runs through the transformed field so it
    matches the solver's quadrature.  Singular measure parts are rejected.
    """
    if not inst.rhs.is_absolutely_continuous:
        raise MeasureError("entropy residual requires an absolutely continuous right-hand side")
    mesh = inst.mesh
    tk = truncate(u - phi, float(k))
    z = inst.table.forward(u)
    coeffs = frozen_coefficients(inst, z)
    gz = mesh.gradients(z)
    gt = mesh.gradients(tk)
    lterm = float(np.dot(mesh.areas * coeffs.rho, np.einsum("td,td->t", inst.diffusion.apply(gz), gt)))
    bterm = float(np.dot(b * mesh.lumped_mass, tk))
    if inst.rhs.ac_part is not None and inst.rhs.ac_part.size:
        fterm = float(np.dot(inst.rhs.ac_part * mesh.areas, mesh.tri_mean(tk)))
    else:
        fterm = 0.0
    return bterm + lterm - fterm


def minty_consistency(inst: ProblemInstance, u: np.ndarray, v: np.ndarray, tol: float = 1e-8) -> CheckResult:
    """Algebraic resolvent identity: the L1 gap between u and zeta(v) equals eps*||v||_1."""
    mesh = inst.mesh
    gap = float(np.dot(mesh.lumped_mass, np.abs(u - inst.pair.zeta(v))))
    v_l1 = float(np.dot(mesh.lumped_mass, np.abs(v)))
    target = inst.eps * v_l1
    err = abs(gap - target)
    budget = tol * (1.0 + v_l1)
    s = _slack(err, budget)
    return CheckResult("minty_gap", gap, target, s, err <= budget, f"|v| l1 norm {v_l1:.6e}")


def apriori_bound_check(inst: ProblemInstance, state: DiscreteState, budget: float = 1.05) -> CheckResult:
    """Transformed-gradient a-priori bound  eps * ||grad z||_p^(p-1) <= C_dual * ||f||_M.

    C_dual is the discrete sup of |L . w| / ||grad w||_p over interior basis
    directions; the budget absorbs the gap between the basis sup and the full
    discrete dual norm.
    """
    z = validate_state(inst, state)
    mesh = inst.mesh
    p = inst.p
    lhs = inst.eps * broken_grad_norm(mesh, z, p) ** (p - 1.0)
    basis_pnorm = np.zeros(mesh.n_nodes)
    gnorm_p = np.einsum("tjd,tjd->tj", mesh.grads, mesh.grads) ** (p / 2.0)
    for j in range(3):
        basis_pnorm += np.bincount(
            mesh.triangles[:, j], weights=mesh.areas * gnorm_p[:, j], minlength=mesh.n_nodes
        )
    basis_pnorm = basis_pnorm ** (1.0 / p)
    interior = mesh.interior
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = np.abs(inst.load[interior]) / basis_pnorm[interior]
    c_dual = float(np.max(ratios, initial=0.0))
    rhs = c_dual * inst.rhs_norm
    s = _slack(lhs, rhs)
    return CheckResult("apriori_bound", lhs, rhs, s, s <= budget, f"C_dual {c_dual:.6e}")


def bump_field(mesh: TriangleMesh, center, radius: float) -> np.ndarray:
    """Nodal interpolant of max(0, 1 - |x - center|^2 / radius^2), zero on the boundary."""
    d2 = ((mesh.nodes - np.asarray(center, dtype=float)) ** 2).sum(axis=1)
    vals = np.maximum(0.0, 1.0 - d2 / float(radius) ** 2)
    vals[mesh.boundary] = 0.0
    return vals


def default_test_fields(mesh: TriangleMesh) -> dict:
    """Two interior bumps used by the vanishing-term probe."""
    center = mesh.centroid()
    r = float(np.min(np.hypot(*(mesh.nodes[mesh.boundary] - center).T)))
    return {
        "bump0": bump_field(mesh, center, 0.9 * r),
        "bump1": bump_field(mesh, center + np.array([0.3 * r, 0.2 * r]), 0.45 * r),
    }


def default_entropy_phis(mesh: TriangleMesh) -> dict:
    """Default entropy test functions: zero and the standard quarter-width bump."""
    center = mesh.centroid()
    return {
        "zero": np.zeros(mesh.n_nodes),
        "bump": bump_field(mesh, center, 0.5),
    }


def run_diagnostics(inst: ProblemInstance, state: DiscreteState, opts: DiagnosticsOptions | None = None) -> DiagnosticsRecord:
    """Evaluate every estimate check on one converged (or candidate) state."""
    opts = opts or DEFAULT_DIAGNOSTICS
    mesh = inst.mesh
    u = recover_u(inst, state)
    v = recover_v(inst, u)
    b = recover_b(inst, v)
    checks: list[CheckResult] = []

    chi = chi_energy_check(inst, u, opts.slack_budget)
    plap = weighted_plap_check(inst, u, opts.slack_budget)
    checks += [chi, plap]

    wq, lqh, inv = sobolev_family_norms(inst, u, opts.q_values)
    for q in opts.q_values:
        checks.append(holder_chain_check(inst, u, q))

    tk_records = []
    for k in opts.k_values:
        res, lhs_full = tk_gradient_check(inst, u, k, opts.slack_budget)
        checks.append(res)
        tk_records.append((k, res.value, res.bound, lhs_full))

    vanish = vanishing_term_probe(inst, u, default_test_fields(mesh))
    checks += vanish
    vanish_records = [(c.name.removeprefix("vanishing_"), c.value, c.bound) for c in vanish]

    entropy_records = []
    if inst.rhs.is_absolutely_continuous:
        h = mesh.h_max
        env = opts.entropy_budget * h * (1.0 + inst.rhs_norm)
        for name, phi in default_entropy_phis(mesh).items():
            for k in opts.k_values:
                r = entropy_residual(inst, u, b, phi, k)
                entropy_records.append((name, k, r))
                s = _slack(max(r, 0.0), env)
                checks.append(
                    CheckResult(f"entropy_{name}_k{k:g}", r, env, s, r <= env, "signed residual vs linear-in-h envelope")
                )
    else:
        checks.append(CheckResult("entropy_skipped", 0.0, 0.0, 0.0, None, "singular measure parts present"))

    minty = minty_consistency(inst, u, v, opts.minty_tol)
    checks.append(minty)
    apriori = apriori_bound_check(inst, state)
    checks.append(apriori)

    qh_default = q_hat(opts.diff_norm_q)
    return DiagnosticsRecord(
        chi_energy=_chi_energy_value(inst, u),
        weighted_plap=plap.value,
        wq_norms=wq,
        lqhat_norms=lqh,
        inv_psi_norm=inv.get(opts.diff_norm_q, lumped_norm(mesh, 1.0 / squash_deriv(u), qh_default)),
        tk_checks=tk_records,
        vanish_probe=vanish_records,
        entropy_residuals=entropy_records,
        minty_gap=minty.value,
        v_l1=float(np.dot(mesh.lumped_mass, np.abs(v))),
        apriori_slack=apriori.slack,
        checks=checks,
    )
