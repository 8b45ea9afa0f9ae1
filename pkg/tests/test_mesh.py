import numpy as np
import pytest

from plapreg.mesh import (
    DiffusionField,
    MeshError,
    TriangleMesh,
    read_mesh,
    structured_mesh,
    write_mesh,
)


def test_square_counts():
    m = structured_mesh("unit_square", 1)
    assert m.n_nodes == 4 and m.n_triangles == 2
    assert m.boundary.all()
    for n in (2, 3, 5, 8):
        m = structured_mesh("unit_square", n)
        assert m.n_nodes == (n + 1) ** 2
        assert m.n_triangles == 2 * n * n
        assert abs(m.domain_area - 1.0) < 1e-14
        assert m.interior.size == (n - 1) ** 2


def test_disk_counts_and_boundary():
    for n in (1, 2, 4, 7):
        m = structured_mesh("unit_disk", n)
        assert m.n_nodes == 1 + 3 * n * (n + 1)
        assert m.n_triangles == 6 * n * n
        radii = np.hypot(*m.nodes[m.boundary].T)
        assert np.abs(radii - 1.0).max() < 1e-12
        # area approaches pi from below
        assert 0.0 < m.domain_area < np.pi


def test_structured_mesh_validation():
    with pytest.raises(MeshError):
        structured_mesh("unit_square", 0)
    with pytest.raises(MeshError):
        structured_mesh("hexagon", 2)


def test_mesh_rejects_bad_orientation():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(MeshError):
        TriangleMesh(nodes, np.array([[0, 2, 1]]), np.array([True, True, True]))


def test_mesh_rejects_nonconforming():
    # two triangles sharing an edge plus a third duplicate over the same edge
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [2.0, 0.5]])
    tris = np.array([[0, 1, 2], [1, 3, 2], [1, 4, 2]])
    with pytest.raises(MeshError):
        TriangleMesh(nodes, tris, np.ones(5, dtype=bool))


def test_mesh_rejects_wrong_boundary_flags():
    m = structured_mesh("unit_square", 2)
    flags = m.boundary.copy()
    flags[m.interior[0]] = True
    with pytest.raises(MeshError):
        TriangleMesh(m.nodes, m.triangles, flags)


def test_p1_gradient_exact_on_affine():
    m = structured_mesh("unit_square", 3)
    w = 2.0 * m.nodes[:, 0] - 0.7 * m.nodes[:, 1] + 0.25
    g = m.gradients(w)
    assert np.abs(g - np.array([2.0, -0.7])).max() < 1e-13


def test_lumped_mass_partition():
    m = structured_mesh("unit_disk", 3)
    assert abs(m.lumped_mass.sum() - m.domain_area) < 1e-13


def test_mesh_file_roundtrip(tmp_path):
    m = structured_mesh("unit_disk", 2)
    path = tmp_path / "disk.mesh"
    write_mesh(m, path)
    m2 = read_mesh(path)
    assert np.array_equal(m.triangles, m2.triangles)
    assert np.array_equal(m.boundary, m2.boundary)
    assert np.abs(m.nodes - m2.nodes).max() == 0.0
    header = path.read_text().splitlines()[0]
    assert header == f"nodes {m.n_nodes} triangles {m.n_triangles}"


def test_read_mesh_errors(tmp_path):
    with pytest.raises(MeshError):
        read_mesh(tmp_path / "missing.mesh")
    bad = tmp_path / "bad.mesh"
    bad.write_text("nodes 1 triangles 0\n")
    with pytest.raises(MeshError):
        read_mesh(bad)


def test_diffusion_field_bounds():
    with pytest.raises(MeshError):
        DiffusionField(np.tile(np.array([[1.0, 0.5], [0.4, 1.0]]), (3, 1, 1)), 0.5, 1.5)
    f = DiffusionField.from_tensors(np.tile(np.array([[2.0, 0.5], [0.5, 1.0]]), (4, 1, 1)))
    ev = np.linalg.eigvalsh(f.tensors[0])
    assert abs(f.lambda_lo - ev[0]) < 1e-12
    assert abs(f.lambda_hi - ev[1]) < 1e-12
    with pytest.raises(MeshError):
        DiffusionField.from_tensors(np.tile(np.array([[1.0, 2.0], [2.0, 1.0]]), (2, 1, 1)))  # indefinite


def test_diffusion_apply():
    f = DiffusionField.isotropic(5, 2.0)
    v = np.ones((5, 2))
    assert np.allclose(f.apply(v), 2.0 * v)
