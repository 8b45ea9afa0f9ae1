"""Piecewise linear monotone nonlinearities and their resolvent calculus.

A constitutive relation ``b = beta(v)``, ``u = zeta(v)`` enters the solver in
normalized form: both parts 1-Lipschitz, non-decreasing, vanishing at 0, and
summing to the identity.  Restricting to piecewise linear functions makes the
normalization and the resolvent ``(eps*Id + zeta)^{-1}`` exact segment
arithmetic, so no root finder sits inside the assembly loop.

All objects are immutable after construction and safe to share.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PiecewiseLinearMonotone",
    "NonlinearityPair",
    "normalize_pair",
    "resolvent",
    "b_from_u",
    "b_from_u_slope",
    "graph_distance",
    "graph_contains",
    "preset_pair",
    "PRESET_NAMES",
]

PRESET_NAMES = ("linear", "stefan", "richards")


@dataclass(frozen=True)
class PiecewiseLinearMonotone:
    """Continuous non-decreasing piecewise linear function with value 0 at 0.

    ``slopes`` has one entry per interval including the two unbounded end
    intervals, so ``len(slopes) == len(breakpoints) + 1``.  Slopes must be
    non-negative; the 1-Lipschitz restriction is enforced where it matters,
    on normalized pairs.
    """

    breakpoints: tuple[float, ...]
    slopes: tuple[float, ...]

    def __post_init__(self) -> None:
        bp = tuple(float(b) for b in self.breakpoints)
        sl = tuple(float(s) for s in self.slopes)
        if len(sl) != len(bp) + 1:
            raise ValueError("need one slope per interval: len(slopes) == len(breakpoints) + 1")
        if any(not math.isfinite(b) for b in bp) or any(not math.isfinite(s) for s in sl):
            raise ValueError("breakpoints and slopes must be finite")
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if any(s < 0.0 for s in sl):
            raise ValueError("slopes must be non-negative (monotone function)")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "slopes", sl)
        object.__setattr__(self, "_bp", np.array(bp, dtype=float))
        object.__setattr__(self, "_sl", np.array(sl, dtype=float))
        object.__setattr__(self, "_values", self._breakpoint_values())

    def _breakpoint_values(self) -> np.ndarray:
        bp, sl = self._bp, self._sl
        if bp.size == 0:
            return np.zeros(0)
        raw = np.zeros(bp.size)
        raw[1:] = np.cumsum(sl[1:-1] * np.diff(bp))
        j0 = int(np.searchsorted(bp, 0.0, side="right"))
        if j0 == 0:
            at_zero = raw[0] + sl[0] * (0.0 - bp[0])
        else:
            at_zero = raw[j0 - 1] + sl[j0] * (0.0 - bp[j0 - 1])
        return raw - at_zero

    def __call__(self, s):
        arr = np.asarray(s, dtype=float)
        scalar = arr.ndim == 0
        if self._bp.size == 0:
            out = self._sl[0] * arr
        else:
            j = np.searchsorted(self._bp, arr, side="right")
            ref = np.clip(j - 1, 0, None)
            out = self._values[ref] + self._sl[j] * (arr - self._bp[ref])
        return float(out) if scalar else out

    def slope_at(self, s):
        """Right-continuous slope at s."""
        arr = np.asarray(s, dtype=float)
        scalar = arr.ndim == 0
        j = np.searchsorted(self._bp, arr, side="right")
        out = self._sl[j]
        return float(out) if scalar else out

    @property
    def is_nonexpansive(self) -> bool:
        return all(s <= 1.0 + 1e-12 for s in self.slopes)

    @classmethod
    def identity(cls) -> "PiecewiseLinearMonotone":
        return cls((), (1.0,))

    @classmethod
    def zero(cls) -> "PiecewiseLinearMonotone":
        return cls((), (0.0,))


def _interval_representatives(breakpoints: tuple[float, ...]) -> list[float]:
    if not breakpoints:
        return [0.0]
    reps = [breakpoints[0] - 1.0]
    reps += [0.5 * (a + b) for a, b in zip(breakpoints, breakpoints[1:])]
    reps.append(breakpoints[-1] + 1.0)
    return reps


@dataclass(frozen=True)
class NonlinearityPair:
    """Normalized monotone pair: ``beta + zeta = Id``, both 1-Lipschitz, 0 at 0.

    ``Z1`` is the smaller of the two unbounded-interval slopes of ``zeta`` and
    ``Z0`` the smallest shift making ``|zeta(s)| >= Z1*|s| - Z0`` hold
    everywhere; construction fails when an end slope of ``zeta`` vanishes,
    since the growth bound would be empty.
    """

    zeta: PiecewiseLinearMonotone
    beta: PiecewiseLinearMonotone

    def __post_init__(self) -> None:
        zeta, beta = self.zeta, self.beta
        if not (zeta.is_nonexpansive and beta.is_nonexpansive):
            raise ValueError("normalized pair must be 1-Lipschitz in both parts")
        grid = sorted(set(zeta.breakpoints) | set(beta.breakpoints))
        probe = list(grid)
        probe += [0.5 * (a + b) for a, b in zip(grid, grid[1:])]
        span = max((abs(g) for g in grid), default=0.0) + 1.0
        probe += [0.0, -span, span]
        for x in probe:
            if abs(beta(x) + zeta(x) - x) > 1e-12 * (1.0 + abs(x)):
                raise ValueError(f"pair does not sum to the identity at s={x:g}")
        z1 = min(zeta.slopes[0], zeta.slopes[-1])
        if z1 <= 0.0:
            raise ValueError("zeta must grow at both ends (end slopes > 0)")
        corners = list(zeta.breakpoints) + [0.0]
        z0 = max(0.0, max(z1 * abs(x) - abs(zeta(x)) for x in corners))
        object.__setattr__(self, "Z1", float(z1))
        object.__setattr__(self, "Z0", float(z0))
        for x in probe:
            if abs(zeta(x)) < self.Z1 * abs(x) - self.Z0 - 1e-12 * (1.0 + abs(x)):
                raise ValueError(f"growth bound |zeta| >= Z1|s| - Z0 fails at s={x:g}")

    @property
    def is_linear(self) -> bool:
        """True when beta vanishes identically (no zeroth-order nonlinearity)."""
        return all(s == 0.0 for s in self.beta.slopes)

    @classmethod
    def from_zeta(cls, zeta: PiecewiseLinearMonotone) -> "NonlinearityPair":
        beta = PiecewiseLinearMonotone(zeta.breakpoints, tuple(1.0 - s for s in zeta.slopes))
        return cls(zeta=zeta, beta=beta)


def normalize_pair(beta_hat: PiecewiseLinearMonotone, zeta_hat: PiecewiseLinearMonotone) -> NonlinearityPair:
    """Rescale a raw monotone pair so the two parts sum to the identity.

    Composes each part with the inverse of their sum; requires the sum to be
    strictly increasing onto the real line (positive slope on every interval).
    """
    merged = tuple(sorted(set(beta_hat.breakpoints) | set(zeta_hat.breakpoints)))
    reps = _interval_representatives(merged)
    b_sl = np.array([beta_hat.slope_at(r) for r in reps])
    z_sl = np.array([zeta_hat.slope_at(r) for r in reps])
    total = b_sl + z_sl
    if np.any(total <= 0.0):
        raise ValueError("degenerate pair: beta + zeta has a flat interval, cannot be inverted")
    v_break = tuple(float(beta_hat(m) + zeta_hat(m)) for m in merged)
    z_norm = z_sl / total
    zeta = PiecewiseLinearMonotone(v_break, tuple(z_norm))
    beta = PiecewiseLinearMonotone(v_break, tuple(1.0 - z_norm))
    return NonlinearityPair(zeta=zeta, beta=beta)


def resolvent(pair: NonlinearityPair, eps: float, s):
    """Solve ``eps*v + zeta(v) = s`` for v, exactly on each linear segment."""
    ev = float(eps)
    if not math.isfinite(ev) or ev <= 0.0:
        raise ValueError(f"resolvent parameter must be finite and > 0, got {eps!r}")
    zeta = pair.zeta
    arr = np.asarray(s, dtype=float)
    scalar = arr.ndim == 0
    bp = zeta._bp
    if bp.size == 0:
        out = arr / (ev + zeta._sl[0])
    else:
        g_vals = ev * bp + zeta._values
        j = np.searchsorted(g_vals, arr, side="right")
        ref = np.clip(j - 1, 0, None)
        out = bp[ref] + (arr - g_vals[ref]) / (ev + zeta._sl[j])
    return float(out) if scalar else out


def b_from_u(pair: NonlinearityPair, eps: float, s):
    """Zeroth-order coefficient after the resolvent substitution: ``beta(resolvent(s))``."""
    return pair.beta(resolvent(pair, eps, s))


def b_from_u_slope(pair: NonlinearityPair, eps: float, s):
    """Right-continuous slope of ``b_from_u`` in s: ``beta' / (eps + zeta')`` on the segment."""
    v = resolvent(pair, eps, s)
    return pair.beta.slope_at(v) / (float(eps) + pair.zeta.slope_at(v))


def _segment_distance(px, py, ax, ay, bx, by, lo=0.0, hi=1.0):
    dx, dy = bx - ax, by - ay
    denom = dx * dx + dy * dy
    t = np.zeros_like(px) if denom == 0.0 else ((px - ax) * dx + (py - ay) * dy) / denom
    t = np.clip(t, lo, hi)
    return np.hypot(px - (ax + t * dx), py - (ay + t * dy))


def graph_distance(pair: NonlinearityPair, u, b):
    """Euclidean distance from (u, b) to the curve ``{(zeta(s), beta(s))}``."""
    pu = np.asarray(u, dtype=float)
    pb = np.asarray(b, dtype=float)
    scalar = pu.ndim == 0
    pu, pb = np.atleast_1d(pu), np.atleast_1d(pb)
    s_nodes = sorted(set(pair.zeta.breakpoints) | set(pair.beta.breakpoints) | {0.0})
    vx = np.array([pair.zeta(s) for s in s_nodes])
    vy = np.array([pair.beta(s) for s in s_nodes])
    dist = np.full(pu.shape, np.inf)
    for k in range(len(s_nodes) - 1):
        dist = np.minimum(dist, _segment_distance(pu, pb, vx[k], vy[k], vx[k + 1], vy[k + 1]))
    # unbounded end rays, parametrized outward with a unit span then unclamped above
    zl, bl = pair.zeta.slopes[0], pair.beta.slopes[0]
    zr, br = pair.zeta.slopes[-1], pair.beta.slopes[-1]
    dist = np.minimum(dist, _segment_distance(pu, pb, vx[0], vy[0], vx[0] - zl, vy[0] - bl, 0.0, np.inf))
    dist = np.minimum(dist, _segment_distance(pu, pb, vx[-1], vy[-1], vx[-1] + zr, vy[-1] + br, 0.0, np.inf))
    return float(dist[0]) if scalar else dist


def graph_contains(pair: NonlinearityPair, u, b, tol: float):
    """Whether (u, b) lies within ``tol`` of the constitutive curve."""
    if not (math.isfinite(tol) and tol > 0.0):
        raise ValueError(f"tolerance must be finite and > 0, got {tol!r}")
    d = graph_distance(pair, u, b)
    return d <= tol


def preset_pair(name: str, latent_heat: float = 1.0) -> NonlinearityPair:
    """Built-in constitutive pairs.

    ``linear``   no zeroth-order term (beta = 0, zeta = Id).
    ``stefan``   temperature flat over one latent-heat unit of stored energy;
                 raw pair beta = Id, zeta flat on [0, latent_heat].
    ``richards`` raw saturation curve clipped linearly between -1 and 0
                 (full saturation at and above zero pressure), zeta = Id.
    """
    if name == "linear":
        return NonlinearityPair.from_zeta(PiecewiseLinearMonotone.identity())
    if name == "stefan":
        lh = float(latent_heat)
        if not math.isfinite(lh) or lh <= 0.0:
            raise ValueError(f"latent heat must be finite and > 0, got {latent_heat!r}")
        zeta_hat = PiecewiseLinearMonotone((0.0, lh), (1.0, 0.0, 1.0))
        return normalize_pair(PiecewiseLinearMonotone.identity(), zeta_hat)
    if name == "richards":
        beta_hat = PiecewiseLinearMonotone((-1.0, 0.0), (0.0, 1.0, 0.0))
        return normalize_pair(beta_hat, PiecewiseLinearMonotone.identity())
    raise ValueError(f"unknown preset {name!r}; expected one of {PRESET_NAMES}")
