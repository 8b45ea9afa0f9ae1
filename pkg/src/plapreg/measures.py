"""Measure-valued right-hand sides and their exact P1 load functionals.

A measure is a sum of point atoms, constant line densities on segments, and a
per-triangle absolutely continuous density.  Loads are assembled exactly for
the affine basis: atoms through barycentric coordinates, segments through
trapezoidal integration split at triangle crossings, densities through the
one-third rule.  No mollification is ever applied to the singular parts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import TriangleMesh

__all__ = ["MeasureError", "MeasureData", "measure_norm", "assemble_load", "locate_point"]

_BARY_TOL = 1e-12


class MeasureError(ValueError):
    """Invalid measure data or support outside the meshed domain."""


@dataclass(eq=False)
class MeasureData:
    """Right-hand side measure: Dirac atoms, line densities, and an L1 part.

    ``diracs``  list of ((x, y), weight)
    ``lines``   list of ((x0, y0), (x1, y1), density) with constant density
                per unit length
    ``ac_part`` per-triangle density array, or None
    """

    diracs: list = field(default_factory=list)
    lines: list = field(default_factory=list)
    ac_part: np.ndarray | None = None

    def __post_init__(self) -> None:
        pts, wts = [], []
        for entry in self.diracs:
            (x, y), w = entry
            pts.append((float(x), float(y)))
            wts.append(float(w))
        self.dirac_points = np.array(pts, dtype=float).reshape(-1, 2)
        self.dirac_weights = np.array(wts, dtype=float)
        segs, dens = [], []
        for entry in self.lines:
            (x0, y0), (x1, y1), rho = entry
            a = (float(x0), float(y0))
            b = (float(x1), float(y1))
            if math.hypot(b[0] - a[0], b[1] - a[1]) <= 0.0:
                raise MeasureError("line segment has zero length")
            segs.append((a, b))
            dens.append(float(rho))
        self.line_segments = np.array(segs, dtype=float).reshape(-1, 2, 2)
        self.line_densities = np.array(dens, dtype=float)
        if self.ac_part is not None:
            self.ac_part = np.asarray(self.ac_part, dtype=float)
            if self.ac_part.ndim != 1:
                raise MeasureError("ac_part must be a flat per-triangle array")
        for arr in (self.dirac_points, self.dirac_weights, self.line_segments, self.line_densities):
            if not np.all(np.isfinite(arr)):
                raise MeasureError("measure data must be finite")
        if self.ac_part is not None and not np.all(np.isfinite(self.ac_part)):
            raise MeasureError("measure data must be finite")

    @property
    def is_absolutely_continuous(self) -> bool:
        """True when there is no singular part (atoms or lines)."""
        return self.dirac_weights.size == 0 and self.line_densities.size == 0

    @property
    def is_zero(self) -> bool:
        return (
            self.is_absolutely_continuous
            and (self.ac_part is None or not np.any(self.ac_part))
        )


def measure_norm(f: MeasureData, mesh: TriangleMesh | None = None) -> float:
    """Total variation: sum of |weights|, |density|*length, and |density_T|*|T|."""
    total = float(np.abs(f.dirac_weights).sum())
    if f.line_densities.size:
        lengths = np.hypot(*(f.line_segments[:, 1] - f.line_segments[:, 0]).T)
        total += float((np.abs(f.line_densities) * lengths).sum())
    if f.ac_part is not None and f.ac_part.size:
        if mesh is None:
            raise MeasureError("a mesh is required to integrate the absolutely continuous part")
        if f.ac_part.shape != (mesh.n_triangles,):
            raise MeasureError("ac_part length does not match the number of triangles")
        total += float((np.abs(f.ac_part) * mesh.areas).sum())
    return total


def _barycentric(mesh: TriangleMesh, point: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of one point in every triangle, shape (m, 3)."""
    tris = mesh.triangles
    p = mesh.nodes[tris]
    out = np.empty((tris.shape[0], 3))
    for j in range(3):
        a = p[:, (j + 1) % 3]
        b = p[:, (j + 2) % 3]
        cross = (b[:, 0] - a[:, 0]) * (point[1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (point[0] - a[:, 0])
        out[:, j] = 0.5 * cross / mesh.areas
    return out


def locate_point(mesh: TriangleMesh, point) -> tuple[int, np.ndarray]:
    """First triangle containing the point, with its barycentric coordinates."""
    pt = np.asarray(point, dtype=float)
    bary = _barycentric(mesh, pt)
    ok = np.flatnonzero(np.all(bary >= -_BARY_TOL, axis=1))
    if ok.size == 0:
        raise MeasureError(f"point ({pt[0]:g}, {pt[1]:g}) lies outside the meshed domain")
    t = int(ok[0])
    lam = np.clip(bary[t], 0.0, None)
    return t, lam / lam.sum()


def _segment_intervals(mesh: TriangleMesh, a: np.ndarray, b: np.ndarray):
    """Clip the parametrized segment a + t*(b-a), t in [0,1], against every triangle.

    Returns (triangle index, t0, t1) for the non-degenerate intersections and
    the barycentric coordinates of both ends, computed exactly from the affine
    coordinate functions.
    """
    la = _barycentric(mesh, a)
    lb = _barycentric(mesh, b)
    d = lb - la
    tlo = np.zeros(mesh.n_triangles)
    thi = np.ones(mesh.n_triangles)
    for j in range(3):
        aj, dj = la[:, j], d[:, j]
        pos = dj > _BARY_TOL
        neg = dj < -_BARY_TOL
        flat = ~pos & ~neg
        with np.errstate(divide="ignore", invalid="ignore"):
            crossing = -aj / np.where(dj == 0.0, 1.0, dj)
        tlo = np.where(pos, np.maximum(tlo, crossing), tlo)
        thi = np.where(neg, np.minimum(thi, crossing), thi)
        dead = flat & (aj < -_BARY_TOL)
        thi = np.where(dead, -1.0, thi)
    keep = np.flatnonzero(thi - tlo > 1e-12)
    order = keep[np.argsort(tlo[keep], kind="stable")]
    return [(int(t), float(tlo[t]), float(thi[t]), la[t], lb[t]) for t in order]


def assemble_load(f: MeasureData, mesh: TriangleMesh) -> np.ndarray:
    """Load vector  L_j = integral of the j-th nodal basis against the measure.

    Boundary entries are kept; the solver masks them.  Atoms on shared edges
    are attributed to the first containing triangle, which is consistent
    because the basis is continuous across elements.
    """
    load = np.zeros(mesh.n_nodes)
    for pt, w in zip(f.dirac_points, f.dirac_weights):
        t, lam = locate_point(mesh, pt)
        load[mesh.triangles[t]] += w * lam
    for seg, rho in zip(f.line_segments, f.line_densities):
        a, b = seg[0], seg[1]
        seg_len = float(np.hypot(*(b - a)))
        pieces = _segment_intervals(mesh, a, b)
        covered = 0.0
        t_cur = 0.0
        for t, t0, t1, la, lb in pieces:
            lo = max(t0, t_cur)
            if t1 <= lo + 1e-14:
                continue
            lam_lo = la + lo * (lb - la)
            lam_hi = la + t1 * (lb - la)
            piece_len = (t1 - lo) * seg_len
            load[mesh.triangles[t]] += rho * piece_len * 0.5 * (lam_lo + lam_hi)
            covered += t1 - lo
            t_cur = t1
        if covered < 1.0 - 1e-9:
            raise MeasureError(
                f"line segment ({a[0]:g},{a[1]:g})-({b[0]:g},{b[1]:g}) leaves the meshed domain "
                f"(covered fraction {covered:.6f})"
            )
    if f.ac_part is not None and f.ac_part.size:
        if f.ac_part.shape != (mesh.n_triangles,):
            raise MeasureError("ac_part length does not match the number of triangles")
        w = f.ac_part * mesh.areas / 3.0
        for j in range(3):
            load += np.bincount(mesh.triangles[:, j], weights=w, minlength=mesh.n_nodes)
    return load
