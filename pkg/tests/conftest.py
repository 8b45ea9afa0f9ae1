import numpy as np
import pytest

from plapreg.kernel import RegularizationOrder
from plapreg.measures import MeasureData
from plapreg.mesh import DiffusionField, structured_mesh
from plapreg.monotone import preset_pair
from plapreg.system import ProblemInstance


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def make_instance(
    shape="unit_square",
    refinement=4,
    p=3.0,
    eps=0.1,
    preset="linear",
    diracs=(((0.5, 0.5), 1.0),),
    ac=None,
    tensor=None,
    latent_heat=1.0,
):
    mesh = structured_mesh(shape, refinement)
    if tensor is None:
        diffusion = DiffusionField.isotropic(mesh.n_triangles, 1.0)
    else:
        diffusion = DiffusionField.from_tensors(np.tile(tensor, (mesh.n_triangles, 1, 1)))
    ac_part = None
    if ac is not None:
        if callable(ac):
            cent = mesh.nodes[mesh.triangles].mean(axis=1)
            ac_part = np.asarray(ac(cent[:, 0], cent[:, 1]), dtype=float)
        elif np.isscalar(ac):
            ac_part = np.full(mesh.n_triangles, ac)
        else:
            ac_part = np.asarray(ac)
    rhs = MeasureData(diracs=list(diracs), ac_part=ac_part)
    return ProblemInstance(
        mesh=mesh,
        diffusion=diffusion,
        rhs=rhs,
        pair=preset_pair(preset, latent_heat),
        order=RegularizationOrder(p),
        eps=eps,
    )


def random_interior_field(mesh, rng, scale=0.5):
    w = np.zeros(mesh.n_nodes)
    w[mesh.interior] = rng.normal(0.0, scale, mesh.interior.size)
    return w
