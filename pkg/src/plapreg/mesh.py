"""Triangle meshes with P1 geometry caches, plus per-triangle diffusion tensors.

Meshes are immutable after construction; validation enforces consistent
orientation and a conforming edge structure so downstream assembly can trust
the topology.  The ASCII file format is a one-line header ``nodes <n>
triangles <m>`` followed by ``x y boundary_flag`` node lines and 0-based
``i j k`` triangle lines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "MeshError",
    "TriangleMesh",
    "structured_mesh",
    "read_mesh",
    "write_mesh",
    "DiffusionField",
]


class MeshError(ValueError):
    """Invalid mesh data (orientation, conformity, or file format)."""


@dataclass(eq=False)
class TriangleMesh:
    """Conforming triangulation with positively oriented elements.

    Derived P1 quantities (areas, constant basis gradients, lumped vertex
    masses) are computed once at construction.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray
    areas: np.ndarray = field(init=False, repr=False)
    grads: np.ndarray = field(init=False, repr=False)
    lumped_mass: np.ndarray = field(init=False, repr=False)
    interior: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        nodes = np.asarray(self.nodes, dtype=float)
        tris = np.asarray(self.triangles, dtype=np.int64)
        bnd = np.asarray(self.boundary, dtype=bool)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise MeshError("nodes must be an (n, 2) array")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise MeshError("triangles must be an (m, 3) array")
        if bnd.shape != (nodes.shape[0],):
            raise MeshError("boundary flags must be one per node")
        if not np.all(np.isfinite(nodes)):
            raise MeshError("node coordinates must be finite")
        if tris.min(initial=0) < 0 or tris.max(initial=-1) >= nodes.shape[0]:
            raise MeshError("triangle indices out of range")
        if np.any(np.diff(np.sort(tris, axis=1), axis=1) == 0):
            raise MeshError("degenerate triangle with a repeated vertex")
        self.nodes = nodes
        self.triangles = tris
        self.boundary = bnd

        p0 = nodes[tris[:, 0]]
        e1 = nodes[tris[:, 1]] - p0
        e2 = nodes[tris[:, 2]] - p0
        signed = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        if np.any(signed <= 0.0):
            bad = int(np.argmin(signed))
            raise MeshError(f"triangle {bad} has non-positive signed area {signed[bad]:.3e}")
        self.areas = signed

        # constant P1 gradients: grad of the basis at vertex j is the rotated
        # opposite edge over twice the area
        grads = np.empty((tris.shape[0], 3, 2))
        for j in range(3):
            edge = nodes[tris[:, (j + 2) % 3]] - nodes[tris[:, (j + 1) % 3]]
            grads[:, j, 0] = -edge[:, 1]
            grads[:, j, 1] = edge[:, 0]
        grads /= (2.0 * signed)[:, None, None]
        self.grads = grads

        lumped = np.zeros(nodes.shape[0])
        for j in range(3):
            lumped += np.bincount(tris[:, j], weights=signed / 3.0, minlength=nodes.shape[0])
        self.lumped_mass = lumped
        self.interior = np.flatnonzero(~bnd)
        self._check_conformity()

    def _check_conformity(self) -> None:
        tris = self.triangles
        edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
        edges = np.sort(edges, axis=1)
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("non-conforming mesh: an edge is shared by more than 2 triangles")
        rim = uniq[counts == 1]
        rim_nodes = np.unique(rim)
        flagged = np.flatnonzero(self.boundary)
        if not np.array_equal(rim_nodes, flagged):
            raise MeshError("boundary flags do not match the nodes on single-sided edges")

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def domain_area(self) -> float:
        return float(self.areas.sum())

    @property
    def h_max(self) -> float:
        """Longest edge length."""
        tris, nodes = self.triangles, self.nodes
        h = 0.0
        for a, b in ((0, 1), (1, 2), (2, 0)):
            h = max(h, float(np.max(np.hypot(*(nodes[tris[:, a]] - nodes[tris[:, b]]).T))))
        return h

    def tri_mean(self, nodal: np.ndarray) -> np.ndarray:
        """Arithmetic mean of nodal values over each triangle."""
        return nodal[self.triangles].mean(axis=1)

    def gradients(self, nodal: np.ndarray) -> np.ndarray:
        """Piecewise constant gradient of the P1 interpolant, one 2-vector per triangle."""
        return np.einsum("tj,tjd->td", nodal[self.triangles], self.grads)

    def centroid(self) -> np.ndarray:
        c = self.nodes[self.triangles].mean(axis=1)
        return (c * self.areas[:, None]).sum(axis=0) / self.domain_area


def _square_mesh(n: int) -> TriangleMesh:
    idx = lambda i, j: j * (n + 1) + i
    xs = np.linspace(0.0, 1.0, n + 1)
    nodes = np.array([(xs[i], xs[j]) for j in range(n + 1) for i in range(n + 1)])
    tris = []
    for j in range(n):
        for i in range(n):
            n00, n10 = idx(i, j), idx(i + 1, j)
            n01, n11 = idx(i, j + 1), idx(i + 1, j + 1)
            if (i + j) % 2 == 0:
                tris += [(n00, n10, n11), (n00, n11, n01)]
            else:
                tris += [(n00, n10, n01), (n10, n11, n01)]
    boundary = np.zeros(len(nodes), dtype=bool)
    for j in range(n + 1):
        for i in range(n + 1):
            if i in (0, n) or j in (0, n):
                boundary[idx(i, j)] = True
    return TriangleMesh(nodes, np.array(tris), boundary)


def _disk_mesh(n: int) -> TriangleMesh:
    nodes = [(0.0, 0.0)]
    ring_start = [0, 1]
    for k in range(1, n + 1):
        cnt = 6 * k
        r = k / n
        for i in range(cnt):
            a = 2.0 * math.pi * i / cnt
            nodes.append((r * math.cos(a), r * math.sin(a)))
        ring_start.append(ring_start[-1] + cnt)
    tris = []
    first = ring_start[1]
    for i in range(6):
        tris.append((first + i, first + (i + 1) % 6, 0))
    for k in range(2, n + 1):
        outer, inner = ring_start[k], ring_start[k - 1]
        on, inn = 6 * k, 6 * (k - 1)
        a = b = 0
        while a < on or b < inn:
            advance_outer = a < on and (b >= inn or (a + 1) / on <= (b + 1) / inn + 1e-12)
            if advance_outer:
                tris.append((outer + a, outer + (a + 1) % on, inner + b % inn))
                a += 1
            else:
                tris.append((outer + a % on, inner + (b + 1) % inn, inner + b))
                b += 1
    boundary = np.zeros(len(nodes), dtype=bool)
    boundary[ring_start[n] : ring_start[n + 1]] = True
    return TriangleMesh(np.array(nodes), np.array(tris), boundary)


def structured_mesh(shape: str, refinement: int) -> TriangleMesh:
    """Built-in meshes of the unit square and the unit disk.

    The square uses the alternating-diagonal right-triangle pattern with
    ``2 * refinement**2`` elements; the disk is a ring construction whose
    outermost nodes sit on the unit circle.
    """
    if not isinstance(refinement, int) or refinement < 1:
        raise MeshError(f"refinement must be a positive integer, got {refinement!r}")
    if shape == "unit_square":
        return _square_mesh(refinement)
    if shape == "unit_disk":
        return _disk_mesh(refinement)
    raise MeshError(f"unknown mesh shape {shape!r}; expected 'unit_square' or 'unit_disk'")


def write_mesh(mesh: TriangleMesh, path) -> None:
    lines = [f"nodes {mesh.n_nodes} triangles {mesh.n_triangles}"]
    for (x, y), flag in zip(mesh.nodes, mesh.boundary):
        lines.append(f"{x:.17g} {y:.17g} {int(flag)}")
    for i, j, k in mesh.triangles:
        lines.append(f"{i} {j} {k}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> TriangleMesh:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise MeshError(f"cannot read mesh file {path}: {exc}") from exc
    rows = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not rows:
        raise MeshError(f"empty mesh file {path}")
    head = rows[0].split()
    if len(head) != 4 or head[0] != "nodes" or head[2] != "triangles":
        raise MeshError(f"bad mesh header {rows[0]!r}; expected 'nodes <n> triangles <m>'")
    try:
        n, m = int(head[1]), int(head[3])
    except ValueError as exc:
        raise MeshError(f"bad mesh header counts in {rows[0]!r}") from exc
    if len(rows) != 1 + n + m:
        raise MeshError(f"mesh file has {len(rows) - 1} data lines, expected {n + m}")
    nodes = np.empty((n, 2))
    boundary = np.empty(n, dtype=bool)
    for i, ln in enumerate(rows[1 : 1 + n]):
        parts = ln.split()
        if len(parts) != 3:
            raise MeshError(f"bad node line {i}: {ln!r}")
        nodes[i] = (float(parts[0]), float(parts[1]))
        boundary[i] = bool(int(parts[2]))
    tris = np.empty((m, 3), dtype=np.int64)
    for t, ln in enumerate(rows[1 + n :]):
        parts = ln.split()
        if len(parts) != 3:
            raise MeshError(f"bad triangle line {t}: {ln!r}")
        tris[t] = [int(v) for v in parts]
    return TriangleMesh(nodes, tris, boundary)


@dataclass(eq=False)
class DiffusionField:
    """Symmetric 2x2 diffusion tensor per triangle with global spectral bounds."""

    tensors: np.ndarray
    lambda_lo: float
    lambda_hi: float

    def __post_init__(self) -> None:
        t = np.asarray(self.tensors, dtype=float)
        if t.ndim != 3 or t.shape[1:] != (2, 2):
            raise MeshError("tensors must be an (m, 2, 2) array")
        if not np.all(np.isfinite(t)):
            raise MeshError("diffusion tensors must be finite")
        scale = np.abs(t).max(initial=1.0)
        if np.any(np.abs(t[:, 0, 1] - t[:, 1, 0]) > 1e-12 * scale):
            raise MeshError("diffusion tensors must be symmetric")
        lo, hi = _eig_range(t)
        if self.lambda_lo <= 0.0:
            raise MeshError(f"lambda_lo must be > 0, got {self.lambda_lo}")
        tol = 1e-10 * max(scale, 1.0)
        if lo < self.lambda_lo - tol or hi > self.lambda_hi + tol:
            raise MeshError(
                f"tensor eigenvalues [{lo:.6g}, {hi:.6g}] leave the declared "
                f"range [{self.lambda_lo:.6g}, {self.lambda_hi:.6g}]"
            )
        self.tensors = t

    @classmethod
    def isotropic(cls, n_triangles: int, value: float) -> "DiffusionField":
        t = np.tile(np.eye(2) * float(value), (n_triangles, 1, 1))
        return cls(t, float(value), float(value))

    @classmethod
    def from_tensors(cls, tensors: np.ndarray) -> "DiffusionField":
        t = np.asarray(tensors, dtype=float)
        lo, hi = _eig_range(t)
        return cls(t, lo, hi)

    def apply(self, vecs: np.ndarray) -> np.ndarray:
        """Matrix-vector product per triangle: (m, 2, 2) x (m, 2) -> (m, 2)."""
        return np.einsum("tde,te->td", self.tensors, vecs)


def _eig_range(t: np.ndarray) -> tuple[float, float]:
    half_tr = 0.5 * (t[:, 0, 0] + t[:, 1, 1])
    rad = np.sqrt((0.5 * (t[:, 0, 0] - t[:, 1, 1])) ** 2 + t[:, 0, 1] ** 2)
    return float(np.min(half_tr - rad)), float(np.max(half_tr + rad))
