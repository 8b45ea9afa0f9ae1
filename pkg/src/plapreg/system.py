"""P1 discrete energy, residual, and matrices in the transformed variable.

The unknown solved for is the image of u under the change of variable, so the
degenerate weighted gradient term becomes a plain p-Laplacian.  Gradient-term
coefficients are frozen per triangle at the arithmetic mean of the nodal
values (one-point quadrature is exact in the piecewise constant gradients);
the zeroth-order term uses lumped vertex quadrature, which keeps it monotone
and nodewise decoupled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .kernel import (
    DEFAULT_TOLERANCES,
    RegularizationOrder,
    ScalarToleranceConfig,
    get_transform_table,
    order_value,
)
from .measures import MeasureData, assemble_load, measure_norm
from .mesh import DiffusionField, TriangleMesh
from .monotone import NonlinearityPair, b_from_u, b_from_u_slope, resolvent

__all__ = [
    "NodalField",
    "ProblemInstance",
    "DiscreteState",
    "energy",
    "residual",
    "subproblem_jacobian",
    "full_residual",
    "full_jacobian",
    "recover_u",
    "recover_v",
    "recover_b",
    "with_eps",
]

NodalField = np.ndarray


@dataclass(eq=False)
class ProblemInstance:
    """One regularized problem: mesh, diffusion, measure, nonlinearity, p, eps.

    For a genuinely nonlinear pair the construction enforces eps < Z1/2, the
    range on which the resolvent substitution keeps its coercivity.
    """

    mesh: TriangleMesh
    diffusion: DiffusionField
    rhs: MeasureData
    pair: NonlinearityPair
    order: RegularizationOrder
    eps: float
    scalar_cfg: ScalarToleranceConfig = DEFAULT_TOLERANCES
    load: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.order = RegularizationOrder(order_value(self.order))
        eps = float(self.eps)
        if not math.isfinite(eps) or eps <= 0.0:
            raise ValueError(f"eps must be finite and > 0, got {self.eps!r}")
        if not self.pair.is_linear and eps >= self.pair.Z1 / 2.0:
            raise ValueError(
                f"quasilinear run requires eps < Z1/2 = {self.pair.Z1 / 2.0:g}, got {eps:g}"
            )
        self.eps = eps
        if self.diffusion.tensors.shape[0] != self.mesh.n_triangles:
            raise ValueError("diffusion field does not match the mesh")
        self.table = get_transform_table(self.order.p, self.scalar_cfg)
        self.load = assemble_load(self.rhs, self.mesh)
        self.rhs_norm = measure_norm(self.rhs, self.mesh)

    @property
    def p(self) -> float:
        return self.order.p


def with_eps(inst: ProblemInstance, eps: float) -> ProblemInstance:
    """Same problem at a different regularization strength."""
    return replace(inst, eps=eps)


@dataclass(eq=False)
class DiscreteState:
    """Nodal values of the transformed unknown; zero on the boundary."""

    transformed: np.ndarray

    def __post_init__(self) -> None:
        self.transformed = np.asarray(self.transformed, dtype=float)


def _check_field(inst: ProblemInstance, w: np.ndarray, name: str) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (inst.mesh.n_nodes,):
        raise ValueError(f"{name} must have one value per node")
    if not np.all(np.isfinite(w)):
        raise ValueError(f"{name} must be finite")
    if np.any(w[inst.mesh.boundary] != 0.0):
        raise ValueError(f"{name} must vanish on boundary nodes")
    return w


def validate_state(inst: ProblemInstance, state: DiscreteState) -> np.ndarray:
    return _check_field(inst, state.transformed, "state")


@dataclass(eq=False)
class FrozenCoefficients:
    """Coefficients of the convex subproblem at a frozen transformed field."""

    sigma: np.ndarray      # nodal zeroth-order coefficient
    rho: np.ndarray        # per-triangle gradient weight (derivative of the inverse)
    u_nodes: np.ndarray    # recovered original variable at the nodes
    x_mean: np.ndarray     # recovered variable at the per-triangle mean


def frozen_coefficients(inst: ProblemInstance, frozen: np.ndarray) -> FrozenCoefficients:
    table = inst.table
    u_nodes = table.inverse(frozen)
    sigma = np.asarray(b_from_u(inst.pair, inst.eps, u_nodes), dtype=float)
    mean = inst.mesh.tri_mean(frozen)
    x_mean, rho = table.inverse_with_deriv(mean)
    return FrozenCoefficients(sigma=sigma, rho=rho, u_nodes=u_nodes, x_mean=x_mean)


def _energy_terms(inst: ProblemInstance, coeffs: FrozenCoefficients, w: np.ndarray):
    mesh = inst.mesh
    g = mesh.gradients(w)
    gn = np.hypot(g[:, 0], g[:, 1])
    p = inst.p
    mass = float(np.dot(coeffs.sigma * mesh.lumped_mass, w))
    plap = inst.eps / p * float(np.dot(mesh.areas, gn**p))
    lg = inst.diffusion.apply(g)
    quad = 0.5 * float(np.dot(mesh.areas * coeffs.rho, np.einsum("td,td->t", lg, g)))
    return mass, plap, quad, g, gn, lg


def energy(inst: ProblemInstance, frozen, w) -> float:
    """Frozen-coefficient convex energy whose minimizer is the subproblem solution."""
    frozen = _check_field(inst, np.asarray(frozen, dtype=float), "frozen")
    w = _check_field(inst, w, "w")
    coeffs = frozen_coefficients(inst, frozen)
    return energy_from_coeffs(inst, coeffs, w)


def energy_from_coeffs(inst: ProblemInstance, coeffs: FrozenCoefficients, w: np.ndarray) -> float:
    mass, plap, quad, *_ = _energy_terms(inst, coeffs, w)
    return mass + plap + quad - float(np.dot(inst.load, w))


def residual_from_coeffs(inst: ProblemInstance, coeffs: FrozenCoefficients, w: np.ndarray) -> np.ndarray:
    mesh = inst.mesh
    _, _, _, g, gn, lg = _energy_terms(inst, coeffs, w)
    p = inst.p
    flux = inst.eps * (gn ** (p - 2.0))[:, None] * g + coeffs.rho[:, None] * lg
    r = coeffs.sigma * mesh.lumped_mass - inst.load
    contrib = mesh.areas[:, None] * np.einsum("td,tjd->tj", flux, mesh.grads)
    for j in range(3):
        r += np.bincount(mesh.triangles[:, j], weights=contrib[:, j], minlength=mesh.n_nodes)
    r[mesh.boundary] = 0.0
    return r


def residual(inst: ProblemInstance, frozen, w) -> np.ndarray:
    """Gradient of the frozen-coefficient energy; zero entries on the boundary."""
    frozen = _check_field(inst, np.asarray(frozen, dtype=float), "frozen")
    w = _check_field(inst, w, "w")
    coeffs = frozen_coefficients(inst, frozen)
    return residual_from_coeffs(inst, coeffs, w)


def _plap_hessian(inst: ProblemInstance, g: np.ndarray, gn: np.ndarray) -> np.ndarray:
    """Per-triangle 2x2 Hessian block of |g|^p / p; zero where the gradient vanishes."""
    p = inst.p
    m = g.shape[0]
    h = np.zeros((m, 2, 2))
    pos = gn > 0.0
    if np.any(pos):
        a = np.zeros(m)
        b = np.zeros(m)
        a[pos] = gn[pos] ** (p - 2.0)
        b[pos] = (p - 2.0) * gn[pos] ** (p - 4.0)
        h[:, 0, 0] = a + b * g[:, 0] * g[:, 0]
        h[:, 0, 1] = b * g[:, 0] * g[:, 1]
        h[:, 1, 0] = h[:, 0, 1]
        h[:, 1, 1] = a + b * g[:, 1] * g[:, 1]
    return h


def _assemble(inst: ProblemInstance, local: np.ndarray, diag: np.ndarray | None = None) -> sp.csr_matrix:
    """Scatter (m, 3, 3) local blocks into a CSR matrix, boundary rows and columns zeroed."""
    mesh = inst.mesh
    tris = mesh.triangles
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    vals = local.ravel().copy()
    mask = inst.mesh.boundary
    vals[mask[rows] | mask[cols]] = 0.0
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(mesh.n_nodes, mesh.n_nodes)).tocsr()
    if diag is not None:
        d = diag.copy()
        d[mask] = 0.0
        mat = mat + sp.diags(d)
    return mat


def jacobian_from_coeffs(inst: ProblemInstance, coeffs: FrozenCoefficients, w: np.ndarray) -> sp.csr_matrix:
    mesh = inst.mesh
    g = mesh.gradients(w)
    gn = np.hypot(g[:, 0], g[:, 1])
    blocks = inst.eps * _plap_hessian(inst, g, gn) + coeffs.rho[:, None, None] * inst.diffusion.tensors
    local = np.einsum("tjd,tde,tke->tjk", mesh.grads, blocks, mesh.grads) * mesh.areas[:, None, None]
    return _assemble(inst, local)


def subproblem_jacobian(inst: ProblemInstance, frozen, w) -> sp.csr_matrix:
    """Hessian of the frozen-coefficient energy: symmetric, positive semidefinite."""
    frozen = _check_field(inst, np.asarray(frozen, dtype=float), "frozen")
    w = _check_field(inst, w, "w")
    coeffs = frozen_coefficients(inst, frozen)
    return jacobian_from_coeffs(inst, coeffs, w)


def full_residual(inst: ProblemInstance, state: DiscreteState) -> np.ndarray:
    """Residual of the nonlinear system: coefficients frozen at the state itself."""
    z = validate_state(inst, state)
    coeffs = frozen_coefficients(inst, z)
    return residual_from_coeffs(inst, coeffs, z)


def full_jacobian(inst: ProblemInstance, state: DiscreteState) -> sp.csr_matrix:
    """Exact linearization of ``full_residual`` (generally nonsymmetric).

    Adds to the frozen-coefficient Hessian the diagonal derivative of the
    zeroth-order coefficient and the per-triangle coupling through the
    gradient weight's dependence on the mean nodal value.
    """
    z = validate_state(inst, state)
    mesh = inst.mesh
    table = inst.table
    coeffs = frozen_coefficients(inst, z)
    g = mesh.gradients(z)
    gn = np.hypot(g[:, 0], g[:, 1])
    blocks = inst.eps * _plap_hessian(inst, g, gn) + coeffs.rho[:, None, None] * inst.diffusion.tensors
    local = np.einsum("tjd,tde,tke->tjk", mesh.grads, blocks, mesh.grads) * mesh.areas[:, None, None]

    lg = inst.diffusion.apply(g)
    rho_prime = table.inverse_deriv_deriv(mesh.tri_mean(z))
    # row j, column k coupling: area * rho'(mean)/3 * (Lambda grad z . grad phi_j)
    row_factor = np.einsum("td,tjd->tj", lg, mesh.grads) * (mesh.areas * rho_prime / 3.0)[:, None]
    local = local + row_factor[:, :, None]

    mu_slope = np.asarray(b_from_u_slope(inst.pair, inst.eps, coeffs.u_nodes), dtype=float)
    inv_deriv = 1.0 / np.maximum(table.deriv(coeffs.u_nodes), 1e-300)
    diag = mu_slope * inv_deriv * mesh.lumped_mass
    return _assemble(inst, local, diag=diag)


def recover_u(inst: ProblemInstance, state: DiscreteState) -> NodalField:
    """Original variable from the transformed one, nodewise; boundary zeros preserved."""
    return inst.table.inverse(validate_state(inst, state))


def recover_v(inst: ProblemInstance, u: NodalField) -> NodalField:
    """Resolvent variable from u, nodewise."""
    return np.asarray(resolvent(inst.pair, inst.eps, np.asarray(u, dtype=float)), dtype=float)


def recover_b(inst: ProblemInstance, v: NodalField) -> NodalField:
    """Zeroth-order field from the resolvent variable, nodewise."""
    return np.asarray(inst.pair.beta(np.asarray(v, dtype=float)), dtype=float)
