import numpy as np
import pytest

from plapreg.monotone import (
    NonlinearityPair,
    PiecewiseLinearMonotone,
    b_from_u,
    b_from_u_slope,
    graph_contains,
    graph_distance,
    normalize_pair,
    preset_pair,
    resolvent,
)

GRID = np.linspace(-6.0, 6.0, 97)


def test_piecewise_validation():
    with pytest.raises(ValueError):
        PiecewiseLinearMonotone((0.0,), (1.0,))  # slope count mismatch
    with pytest.raises(ValueError):
        PiecewiseLinearMonotone((1.0, 0.0), (1.0, 1.0, 1.0))  # unsorted
    with pytest.raises(ValueError):
        PiecewiseLinearMonotone((), (-0.5,))  # decreasing


def test_piecewise_eval_anchored_at_zero():
    f = PiecewiseLinearMonotone((-1.0, 2.0), (0.5, 1.0, 0.25))
    assert f(0.0) == 0.0
    assert f(2.0) == 2.0
    assert f(3.0) == 2.25
    assert f(-1.0) == -1.0
    assert f(-3.0) == -2.0
    assert f.slope_at(-5.0) == 0.5 and f.slope_at(0.3) == 1.0 and f.slope_at(10.0) == 0.25


def test_normalize_linear_preset():
    pair = normalize_pair(PiecewiseLinearMonotone.zero(), PiecewiseLinearMonotone.identity())
    assert pair.is_linear
    assert np.allclose(pair.zeta(GRID), GRID)
    assert np.allclose(pair.beta(GRID), 0.0)


def test_normalize_stefan_matches_hand_inversion():
    pair = preset_pair("stefan", latent_heat=1.0)
    v = GRID
    expected = np.where(v <= 0.0, v / 2.0, np.where(v <= 1.0, 0.0, (v - 1.0) / 2.0))
    assert np.abs(pair.zeta(v) - expected).max() < 1e-14
    assert np.abs(pair.beta(v) - (v - expected)).max() < 1e-14


@pytest.mark.parametrize("name", ["stefan", "richards"])
def test_normalize_composition_oracle(name):
    # normalized parts composed with the raw sum reproduce the raw parts
    if name == "stefan":
        beta_hat = PiecewiseLinearMonotone.identity()
        zeta_hat = PiecewiseLinearMonotone((0.0, 1.0), (1.0, 0.0, 1.0))
    else:
        beta_hat = PiecewiseLinearMonotone((-1.0, 0.0), (0.0, 1.0, 0.0))
        zeta_hat = PiecewiseLinearMonotone.identity()
    pair = normalize_pair(beta_hat, zeta_hat)
    for w in GRID:
        v = beta_hat(w) + zeta_hat(w)
        assert abs(pair.zeta(v) - zeta_hat(w)) < 1e-12
        assert abs(pair.beta(v) - beta_hat(w)) < 1e-12


def test_normalize_rejects_flat_sum():
    flat = PiecewiseLinearMonotone((0.0, 1.0), (1.0, 0.0, 1.0))
    with pytest.raises(ValueError):
        normalize_pair(PiecewiseLinearMonotone.zero(), flat)


def test_pair_invariants_and_growth():
    st = preset_pair("stefan")
    assert st.Z1 == 0.5 and st.Z0 == 0.5
    ri = preset_pair("richards")
    assert ri.Z1 == 1.0 and ri.Z0 == 1.0
    for pair in (st, ri, preset_pair("linear")):
        assert np.all(np.abs(pair.zeta(GRID)) >= pair.Z1 * np.abs(GRID) - pair.Z0 - 1e-12)
        assert np.abs(pair.beta(GRID) + pair.zeta(GRID) - GRID).max() < 1e-12


def test_pair_rejects_flat_tails():
    zeta = PiecewiseLinearMonotone((0.0,), (0.0, 1.0))
    with pytest.raises(ValueError):
        NonlinearityPair.from_zeta(zeta)


def test_resolvent_closed_forms():
    lin = preset_pair("linear")
    st = preset_pair("stefan")
    assert resolvent(lin, 0.25, 0.0) == 0.0
    assert abs(resolvent(lin, 0.25, 2.0) - 2.0 / 1.25) < 1e-15
    assert abs(resolvent(st, 0.1, 0.05) - 0.5) < 1e-14
    with pytest.raises(ValueError):
        resolvent(lin, 0.0, 1.0)


def test_resolvent_defining_equation(rng):
    for pair in (preset_pair("stefan"), preset_pair("richards")):
        for _ in range(100):
            eps = rng.uniform(0.01, 0.2)
            s = rng.normal(0.0, 5.0)
            v = resolvent(pair, eps, s)
            assert abs(eps * v + pair.zeta(v) - s) < 1e-12 * (1.0 + abs(s))


def test_resolvent_lipschitz(rng):
    for pair in (preset_pair("stefan"), preset_pair("richards"), preset_pair("linear")):
        eps = 0.05
        s1, s2 = rng.normal(0, 5, 200), rng.normal(0, 5, 200)
        v1 = np.array([resolvent(pair, eps, s) for s in s1])
        v2 = np.array([resolvent(pair, eps, s) for s in s2])
        assert np.all(np.abs(v1 - v2) <= np.abs(s1 - s2) / eps + 1e-12)


def test_resolvent_simple_convergence():
    # evaluated at the image of s0 under (eps Id + zeta), the resolvent is exact
    st = preset_pair("stefan")
    for s0 in (-2.0, 0.3, 1.5):
        for eps in (0.2, 0.01, 1e-4):
            s = st.zeta(s0) + eps * s0
            assert abs(resolvent(st, eps, s) - s0) < 1e-10


def test_b_from_u_values_and_identity(rng):
    st = preset_pair("stefan")
    assert b_from_u(st, 0.07, 0.0) == 0.0
    assert abs(b_from_u(st, 0.1, 0.05) - 0.5) < 1e-14
    lin = preset_pair("linear")
    assert np.all(b_from_u(lin, 0.2, GRID) == 0.0)
    for pair in (st, preset_pair("richards"), lin):
        for _ in range(60):
            eps = rng.uniform(0.005, 0.2)
            s = rng.normal(0.0, 4.0)
            lhs = b_from_u(pair, eps, s)
            rhs = (1.0 + eps) * resolvent(pair, eps, s) - s
            assert abs(lhs - rhs) <= 1e-10


def test_b_from_u_monotone():
    st = preset_pair("stefan")
    vals = b_from_u(st, 0.05, GRID)
    assert np.all(np.diff(vals) >= -1e-14)


def test_b_from_u_slope_fd():
    st = preset_pair("stefan")
    h = 1e-7
    for s in (-1.0, 0.02, 0.7, 2.0):
        fd = (b_from_u(st, 0.1, s + h) - b_from_u(st, 0.1, s - h)) / (2.0 * h)
        sl = b_from_u_slope(st, 0.1, s + 2.0 * h)
        assert abs(fd - sl) < 1e-6


def test_graph_membership():
    st = preset_pair("stefan")
    assert graph_contains(st, 0.0, 0.5, 1e-9)
    assert not graph_contains(st, 0.0, 2.0, 1e-6)
    lin = preset_pair("linear")
    assert graph_contains(lin, 3.7, 0.0, 1e-12)
    with pytest.raises(ValueError):
        graph_contains(lin, 0.0, 0.0, 0.0)


def test_graph_distance_oracle():
    # brute-force parametric sweep of the curve
    st = preset_pair("stefan")
    s = np.linspace(-20.0, 20.0, 400001)
    cx, cy = st.zeta(s), st.beta(s)
    for (u, b) in ((0.0, 2.0), (0.5, 0.1), (-1.0, -0.2), (2.0, 2.0)):
        brute = np.hypot(cx - u, cy - b).min()
        assert abs(graph_distance(st, u, b) - brute) < 1e-4


def test_growth_constants_on_graph():
    # |y| bounded above and below by affine functions of |x| along the curve
    cases = {
        "linear": (0.0, 0.0, 0.0, 0.0),
        "stefan": (1.0, 1.0, 1.0, 0.0),
        "richards": (0.0, 1.0, 0.0, 0.0),
    }
    s = np.linspace(-50.0, 50.0, 2001)
    for name, (t1, t2, t3, t4) in cases.items():
        pair = preset_pair(name)
        x, y = np.abs(pair.zeta(s)), np.abs(pair.beta(s))
        assert np.all(y <= t1 * x + t2 + 1e-12)
        assert np.all(t3 * x - t4 <= y + 1e-12)


def test_preset_unknown():
    with pytest.raises(ValueError):
        preset_pair("unknown")
    with pytest.raises(ValueError):
        preset_pair("stefan", latent_heat=0.0)
