"""Scalar calculus of the logarithmic squashing map and its derived transforms.

The squashing map sends the real line onto (-1, 1); its derivative lies in
(0, 1] and decays slowly, which is what makes powers of it usable as weights
in a vanishing p-Laplace term.  The change of variable ``transform`` is the
primitive of ``squash_deriv ** ((p-2)/(p-1))``; it absorbs the weight so the
regularizing term becomes a plain p-Laplacian in the new variable.

All maps are odd and implemented through ``|s|``, so oddness holds exactly in
floating point.  Everything here is pure and reentrant; ``TransformTable``
instances are built once and read-only afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad
from scipy.optimize import brentq

__all__ = [
    "RegularizationOrder",
    "ScalarToleranceConfig",
    "DEFAULT_TOLERANCES",
    "QuadratureError",
    "squash",
    "squash_deriv",
    "grad_weight",
    "transform",
    "transform_deriv",
    "transform_second_deriv",
    "transform_inverse",
    "sqrt_squash_primitive",
    "truncate",
    "TransformTable",
    "get_transform_table",
]


@dataclass(frozen=True)
class RegularizationOrder:
    """Exponent of the vanishing regularization term; must be finite and > 2."""

    p: float

    def __post_init__(self) -> None:
        p = float(self.p)
        if not math.isfinite(p) or p <= 2.0:
            raise ValueError(f"regularization order must be finite and > 2, got {self.p!r}")
        object.__setattr__(self, "p", p)


def order_value(p) -> float:
    """Return the validated exponent from a ``RegularizationOrder`` or a bare number."""
    if isinstance(p, RegularizationOrder):
        return p.p
    return RegularizationOrder(float(p)).p


@dataclass(frozen=True)
class ScalarToleranceConfig:
    """Tolerances for the quadrature-backed maps and their inverses."""

    quadrature_rel_tol: float = 1e-10
    root_abs_tol: float = 1e-10
    table_resolution: int = 512

    def __post_init__(self) -> None:
        if self.quadrature_rel_tol <= 0.0 or self.root_abs_tol <= 0.0:
            raise ValueError("tolerances must be strictly positive")
        if self.table_resolution < 8:
            raise ValueError("table_resolution must be at least 8")


DEFAULT_TOLERANCES = ScalarToleranceConfig()


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""


def _split_sign(s):
    arr = np.asarray(s, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite input")
    return np.abs(arr), np.sign(arr), arr.ndim == 0


def _maybe_scalar(out, scalar):
    return float(out) if scalar else out


def squash(s):
    """Odd map of the real line onto (-1, 1): ln(1+|s|) / (1 + ln(1+|s|)), signed."""
    a, sg, scalar = _split_sign(s)
    y = np.log1p(a)
    return _maybe_scalar(sg * (y / (1.0 + y)), scalar)


def squash_deriv(s):
    """Derivative of ``squash``: 1 / ((1 + ln(1+|s|))**2 (1+|s|)), in (0, 1].

    Evaluated as an exponential of logs so huge arguments neither overflow
    nor lose accuracy to cancellation.
    """
    a, _, scalar = _split_sign(s)
    y = np.log1p(a)
    return _maybe_scalar(np.exp(-y - 2.0 * np.log1p(y)), scalar)


def grad_weight(s, p):
    """Weight ``squash_deriv(s) ** (p-2)`` multiplying the degenerate gradient term."""
    pv = order_value(p)
    a, _, scalar = _split_sign(s)
    y = np.log1p(a)
    return _maybe_scalar(np.exp((pv - 2.0) * (-y - 2.0 * np.log1p(y))), scalar)


def transform_deriv(s, p):
    """Integrand of the change of variable: ``squash_deriv(s) ** ((p-2)/(p-1))``."""
    pv = order_value(p)
    c = (pv - 2.0) / (pv - 1.0)
    a, _, scalar = _split_sign(s)
    y = np.log1p(a)
    return _maybe_scalar(np.exp(c * (-y - 2.0 * np.log1p(y))), scalar)


def transform_second_deriv(s, p):
    """Second derivative of ``transform``; odd, with the symmetric value 0 at s = 0."""
    pv = order_value(p)
    c = (pv - 2.0) / (pv - 1.0)
    a, sg, scalar = _split_sign(s)
    y = np.log1p(a)
    dlog = -(1.0 + 2.0 / (1.0 + y)) / (1.0 + a)
    out = c * dlog * np.exp(c * (-y - 2.0 * np.log1p(y))) * sg
    return _maybe_scalar(out, scalar)


def sqrt_transform_integrand(s):
    """Integrand of ``sqrt_squash_primitive``: the square root of ``squash_deriv``."""
    a, _, scalar = _split_sign(s)
    y = np.log1p(a)
    return _maybe_scalar(np.exp(-0.5 * y - np.log1p(y)), scalar)


_DECADES = 10.0 ** np.arange(-8, 309)


def _adaptive_integral(fn, lo: float, hi: float, cfg: ScalarToleranceConfig) -> float:
    """Adaptive quadrature of a smooth positive integrand, split per decade.

    Raises ``QuadratureError`` with the achieved error estimate when the
    accumulated estimate is far off the requested relative tolerance.
    """
    if hi <= lo:
        return 0.0
    inner = _DECADES[(_DECADES > lo) & (_DECADES < hi)]
    edges = np.concatenate([[lo], inner, [hi]])
    total = 0.0
    err = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        v, e = quad(fn, a, b, epsabs=0.0, epsrel=cfg.quadrature_rel_tol, limit=100)
        total += v
        err += e
    if err > 100.0 * cfg.quadrature_rel_tol * max(abs(total), 1e-300):
        raise QuadratureError(
            f"quadrature error estimate {err:.3e} exceeds tolerance "
            f"{cfg.quadrature_rel_tol:.1e} (value {total:.6e})"
        )
    return total


def transform(s, p, cfg: ScalarToleranceConfig = DEFAULT_TOLERANCES):
    """Change of variable: integral of ``transform_deriv`` from 0 to s; odd in s.

    Scalar arguments use adaptive quadrature at ``cfg.quadrature_rel_tol``;
    array arguments are mapped elementwise (use a ``TransformTable`` for bulk
    evaluation inside loops).
    """
    pv = order_value(p)
    arr = np.asarray(s, dtype=float)
    if arr.ndim > 0:
        flat = [transform(v, pv, cfg) for v in arr.ravel()]
        return np.array(flat).reshape(arr.shape)
    sv = float(arr)
    if not math.isfinite(sv):
        raise ValueError("non-finite input")
    if sv == 0.0:
        return 0.0
    val = _adaptive_integral(lambda t: transform_deriv(t, pv), 0.0, abs(sv), cfg)
    return math.copysign(val, sv)


def sqrt_squash_primitive(s, cfg: ScalarToleranceConfig = DEFAULT_TOLERANCES):
    """Primitive of ``sqrt(squash_deriv)`` from 0 to s; odd, with |result| <= |s|."""
    arr = np.asarray(s, dtype=float)
    if arr.ndim > 0:
        flat = [sqrt_squash_primitive(v, cfg) for v in arr.ravel()]
        return np.array(flat).reshape(arr.shape)
    sv = float(arr)
    if not math.isfinite(sv):
        raise ValueError("non-finite input")
    if sv == 0.0:
        return 0.0
    val = _adaptive_integral(sqrt_transform_integrand, 0.0, abs(sv), cfg)
    return math.copysign(val, sv)


def _inverse_bracket(ay: float, pv: float) -> tuple[float, float]:
    """Bracket for the root of ``transform(x) = ay`` from the two growth bounds.

    The upper bound on the transform gives a point below the root, the
    power-law lower bound a point above it.  The lower-bound exponent is
    chosen so its validity constraint holds for every p > 2.
    """
    lo = (1.0 + ay / (pv - 1.0)) ** (pv - 1.0) - 1.0
    t_low = max(0.0, (5.0 - 2.0 * pv) / (pv - 1.0))
    t = 0.5 * (t_low + 1.0 / (pv - 1.0))
    c = (1.0 - t * (pv - 1.0)) ** 2 / (4.0 * t * (pv - 2.0) ** 2)
    ln1p_hi = math.log1p(ay / c) / t
    if ln1p_hi > 700.0:
        raise OverflowError("inverse transform value exceeds the floating point range")
    return lo, math.expm1(ln1p_hi)


def transform_inverse(y, p, cfg: ScalarToleranceConfig = DEFAULT_TOLERANCES):
    """Inverse of ``transform`` by bracketed root finding; odd in y.

    Satisfies ``|transform(result) - y| <= root_abs_tol * (1 + |y|)``: the
    transform is 1-Lipschitz, so an x-tolerance of that size is enough.
    """
    pv = order_value(p)
    arr = np.asarray(y, dtype=float)
    if arr.ndim > 0:
        flat = [transform_inverse(v, pv, cfg) for v in arr.ravel()]
        return np.array(flat).reshape(arr.shape)
    yv = float(arr)
    if not math.isfinite(yv):
        raise ValueError("non-finite input")
    ay = abs(yv)
    if ay == 0.0:
        return 0.0
    lo, hi = _inverse_bracket(ay, pv)

    def f(x):
        return transform(x, pv, cfg) - ay

    flo = f(lo)
    while flo > 0.0 and lo > 1e-300:
        lo *= 0.5
        flo = f(lo)
    fhi = f(hi)
    while fhi < 0.0:
        if hi > 1e300:
            raise OverflowError("bracket expansion exceeded the floating point range")
        hi *= 4.0
        fhi = f(hi)
    root = brentq(f, lo, hi, xtol=0.5 * cfg.root_abs_tol * (1.0 + ay), rtol=8.9e-16, maxiter=200)
    return math.copysign(root, yv)


def truncate(s, k):
    """Clip to [-k, k] keeping the sign: ``min(|s|, k) * sign(s)``; requires k > 0."""
    kv = float(k)
    if not math.isfinite(kv) or kv <= 0.0:
        raise ValueError(f"truncation level must be finite and > 0, got {k!r}")
    a, sg, scalar = _split_sign(s)
    return _maybe_scalar(sg * np.minimum(a, kv), scalar)


class TransformTable:
    """Fast vectorized evaluation of the change of variable for one exponent.

    Cumulative Gauss-Legendre panels over a geometric anchor grid give the
    forward map at near machine precision; the inverse runs a bracketed
    Newton iteration inside the anchor cell.  Construction cross-checks a
    sample of forward values against adaptive quadrature to 1e-8.
    """

    _GL_NODES, _GL_WEIGHTS = leggauss(15)
    _VALIDATION_POINTS = (1e-6, 1e-2, 0.5, math.e - 1.0, 7.0, 123.0, 1e4, 1e12, 1e25)

    def __init__(self, p, cfg: ScalarToleranceConfig = DEFAULT_TOLERANCES):
        self.p = order_value(p)
        self.cfg = cfg
        anchors = np.concatenate([[0.0], np.geomspace(1e-8, 1e30, cfg.table_resolution)])
        self._anchors = anchors
        panels = self._panel(anchors[:-1], anchors[1:])
        self._cums = np.concatenate([[0.0], np.cumsum(panels)])
        for sv in self._VALIDATION_POINTS:
            ref = transform(sv, self.p, cfg)
            got = float(self.forward(sv))
            if abs(got - ref) > 1e-8 * (1.0 + abs(ref)):
                raise RuntimeError(
                    f"transform table validation failed at s={sv:g}: "
                    f"table {got!r} vs quadrature {ref!r}"
                )

    def _panel(self, a, b):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        t = mid[..., None] + half[..., None] * self._GL_NODES
        return half * (transform_deriv(t, self.p) @ self._GL_WEIGHTS)

    def forward(self, s):
        """Vectorized ``transform``; values beyond the table fall back to quadrature."""
        a, sg, scalar = _split_sign(s)
        flat = a.ravel()
        idx = np.clip(np.searchsorted(self._anchors, flat, side="right") - 1, 0, len(self._anchors) - 2)
        lo = self._anchors[idx]
        out = self._cums[idx] + self._panel(lo, np.minimum(flat, self._anchors[-1]))
        tail = flat > self._anchors[-1]
        for i in np.flatnonzero(tail):
            out[i] = self._cums[-1] + _adaptive_integral(
                lambda t: transform_deriv(t, self.p), self._anchors[-1], flat[i], self.cfg
            )
        res = (sg.ravel() * out).reshape(a.shape)
        return _maybe_scalar(res, scalar)

    def deriv(self, s):
        return transform_deriv(s, self.p)

    def inverse(self, y):
        """Vectorized inverse; bracketed Newton within the anchor cell."""
        a, sg, scalar = _split_sign(y)
        flat = a.ravel()
        out = np.empty_like(flat)
        tail = flat > self._cums[-1]
        core = ~tail
        if core.any():
            yv = flat[core]
            idx = np.clip(np.searchsorted(self._cums, yv, side="right") - 1, 0, len(self._cums) - 2)
            lo = self._anchors[idx]
            hi = self._anchors[idx + 1]
            base = self._cums[idx]
            span = self._cums[idx + 1] - base
            frac = np.where(span > 0.0, (yv - base) / np.maximum(span, 1e-300), 0.0)
            x = lo + frac * (hi - lo)
            lob = lo.copy()
            hib = hi.copy()
            tol = self.cfg.root_abs_tol * (1.0 + yv)
            converged = False
            for _ in range(90):
                fval = base + self._panel(lo, x) - yv
                active = np.abs(fval) > tol
                if not active.any():
                    converged = True
                    break
                np.copyto(lob, x, where=active & (fval < 0.0))
                np.copyto(hib, x, where=active & (fval > 0.0))
                d = np.maximum(transform_deriv(x, self.p), 1e-300)
                xn = x - fval / d
                bad = (xn <= lob) | (xn >= hib)
                xn = np.where(bad, 0.5 * (lob + hib), xn)
                x = np.where(active, xn, x)
            if not converged:
                raise RuntimeError("inverse transform iteration did not converge")
            out[core] = x
        for i in np.flatnonzero(tail):
            out[i] = transform_inverse(flat[i], self.p, self.cfg)
        res = (sg.ravel() * out).reshape(a.shape)
        return _maybe_scalar(res, scalar)

    def inverse_deriv(self, y):
        """Derivative of the inverse at y: ``1 / transform_deriv(inverse(y))``."""
        x = self.inverse(y)
        return 1.0 / np.maximum(transform_deriv(x, self.p), 1e-300)

    def inverse_with_deriv(self, y):
        """Return ``(inverse(y), inverse_deriv(y))`` with one inverse evaluation."""
        x = self.inverse(y)
        return x, 1.0 / np.maximum(transform_deriv(x, self.p), 1e-300)

    def inverse_deriv_deriv(self, y):
        """Second derivative of the inverse, used by the exact Newton linearization."""
        x = self.inverse(y)
        d = np.maximum(transform_deriv(x, self.p), 1e-300)
        return -transform_second_deriv(x, self.p) / d**3


@lru_cache(maxsize=16)
def get_transform_table(p: float, cfg: ScalarToleranceConfig = DEFAULT_TOLERANCES) -> TransformTable:
    """Shared, cached tables keyed by exponent and tolerance configuration."""
    return TransformTable(p, cfg)
