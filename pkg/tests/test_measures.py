import numpy as np
import pytest

from plapreg.measures import (
    MeasureData,
    MeasureError,
    assemble_load,
    locate_point,
    measure_norm,
)
from plapreg.mesh import structured_mesh


def test_measure_norm_trivial_cases():
    m = structured_mesh("unit_square", 2)
    assert measure_norm(MeasureData()) == 0.0
    two = MeasureData(diracs=[((0.1, 0.1), 2.0), ((0.2, 0.7), -3.0)])
    assert measure_norm(two) == 5.0
    line = MeasureData(lines=[((0.25, 0.5), (0.75, 0.5), 4.0)])
    assert abs(measure_norm(line, m) - 2.0) < 1e-14
    ac = MeasureData(ac_part=np.full(m.n_triangles, -1.5))
    assert abs(measure_norm(ac, m) - 1.5) < 1e-14
    with pytest.raises(MeasureError):
        measure_norm(ac)  # ac part needs a mesh


def test_dirac_at_node_is_kronecker():
    m = structured_mesh("unit_square", 4)
    node = m.interior[3]
    f = MeasureData(diracs=[(tuple(m.nodes[node]), 1.0)])
    load = assemble_load(f, m)
    expected = np.zeros(m.n_nodes)
    expected[node] = 1.0
    assert np.abs(load - expected).max() < 1e-12


def test_dirac_at_barycenter_splits_evenly():
    m = structured_mesh("unit_square", 2)
    t = 3
    bary = m.nodes[m.triangles[t]].mean(axis=0)
    load = assemble_load(MeasureData(diracs=[(tuple(bary), 1.0)]), m)
    expected = np.zeros(m.n_nodes)
    expected[m.triangles[t]] = 1.0 / 3.0
    assert np.abs(load - expected).max() < 1e-12


def test_dirac_outside_rejected():
    m = structured_mesh("unit_disk", 2)
    with pytest.raises(MeasureError):
        assemble_load(MeasureData(diracs=[((0.9, 0.9), 1.0)]), m)
    with pytest.raises(MeasureError):
        locate_point(m, (2.0, 0.0))


def test_ac_constant_on_triangle():
    m = structured_mesh("unit_square", 2)
    ac = np.zeros(m.n_triangles)
    ac[5] = 3.0
    load = assemble_load(MeasureData(ac_part=ac), m)
    expected = np.zeros(m.n_nodes)
    expected[m.triangles[5]] = 3.0 * m.areas[5] / 3.0
    assert np.abs(load - expected).max() < 1e-14


def test_partition_of_unity():
    m = structured_mesh("unit_disk", 3)
    dens = np.cos(m.nodes[m.triangles].mean(axis=1)[:, 0])
    load = assemble_load(MeasureData(ac_part=dens), m)
    assert abs(load.sum() - float((dens * m.areas).sum())) < 1e-13


def test_load_linearity(rng):
    m = structured_mesh("unit_square", 3)
    f1 = MeasureData(
        diracs=[((0.3, 0.4), 1.5)],
        lines=[((0.1, 0.2), (0.8, 0.9), -2.0)],
        ac_part=rng.normal(0, 1, m.n_triangles),
    )
    f2 = MeasureData(
        diracs=[((0.6, 0.6), -0.5)],
        ac_part=rng.normal(0, 1, m.n_triangles),
    )
    combined = MeasureData(
        diracs=list(zip(map(tuple, np.vstack([f1.dirac_points, f2.dirac_points])),
                        np.concatenate([f1.dirac_weights, f2.dirac_weights]))),
        lines=[((0.1, 0.2), (0.8, 0.9), -2.0)],
        ac_part=f1.ac_part + f2.ac_part,
    )
    lhs = assemble_load(combined, m)
    rhs = assemble_load(f1, m) + assemble_load(f2, m)
    assert np.abs(lhs - rhs).max() < 1e-13


def test_duality_pairing_bound():
    m = structured_mesh("unit_square", 4)
    f = MeasureData(
        diracs=[((0.25, 0.25), 2.0), ((0.5, 0.75), -1.0)],
        lines=[((0.2, 0.2), (0.9, 0.2), 0.5)],
        ac_part=np.full(m.n_triangles, -0.3),
    )
    load = assemble_load(f, m)
    c = 1.7
    assert abs(load.sum() * c) <= abs(c) * measure_norm(f, m) + 1e-12


def test_line_load_exact_simple():
    # horizontal segment of length 1/2 with density 4: total load 2
    m = structured_mesh("unit_square", 4)
    f = MeasureData(lines=[((0.25, 0.5), (0.75, 0.5), 4.0)])
    load = assemble_load(f, m)
    assert abs(load.sum() - 2.0) < 1e-12
    # first moment against x is also exact: integral of 4x over the segment
    moment = float(np.dot(load, m.nodes[:, 0]))
    assert abs(moment - 4.0 * 0.5 * 0.5) < 1e-12


def test_line_leaving_domain_rejected():
    m = structured_mesh("unit_square", 4)
    with pytest.raises(MeasureError):
        assemble_load(MeasureData(lines=[((0.5, 0.5), (1.5, 0.5), 1.0)]), m)


def test_line_along_shared_edge_counts_once():
    m = structured_mesh("unit_square", 2)
    f = MeasureData(lines=[((0.0, 0.5), (1.0, 0.5), 1.0)])
    load = assemble_load(f, m)
    assert abs(load.sum() - 1.0) < 1e-12


def test_zero_length_line_rejected():
    with pytest.raises(MeasureError):
        MeasureData(lines=[((0.5, 0.5), (0.5, 0.5), 1.0)])
