import numpy as np
import pytest

from dieflow import ffd
from dieflow import mesh as M
from dieflow import spline as sp


@pytest.fixture(scope="module")
def t_box():
    mesh = M.generate_tjunction(0.2)
    return ffd.embed(mesh, (2, 2), (3, 3))


def test_embed_parametrization(t_box):
    params = t_box.param_coords
    assert params.min() >= 0.0 and params.max() <= 1.0
    mesh = t_box.base_mesh
    lo = mesh.nodes.min(axis=0)
    hi = mesh.nodes.max(axis=0)
    i_min = int(np.argmin(np.abs(mesh.nodes - lo).sum(axis=1)))
    assert np.allclose(params[i_min], [0.0, 0.0], atol=1e-14)
    center = 0.5 * (lo + hi)
    i_c = int(np.argmin(np.abs(mesh.nodes - center).sum(axis=1)))
    assert np.allclose(params[i_c], [0.5, 0.5], atol=1e-12)


def test_embed_rejects_degenerate():
    flat = M.TriMesh(
        np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]),
        np.array([[0, 1, 2]]),
        np.array([[0, 1]]),
        np.array([int(M.BoundaryTag.WALL)]),
    )
    with pytest.raises(ffd.FFDConfigError):
        ffd.embed(flat)


def test_zero_displacement_is_identity(t_box):
    layout = ffd.dof_layout("tjunction")
    out = ffd.deform(t_box, layout.displacement_from_dofs(np.zeros(18)))
    assert np.abs(out.nodes - t_box.base_mesh.nodes).max() < 1e-12
    assert out.triangles is t_box.base_mesh.triangles
    assert out.boundary_edges is t_box.base_mesh.boundary_edges
    assert np.array_equal(out.boundary_tags, t_box.base_mesh.boundary_tags)


def test_uniform_displacement_is_translation(t_box):
    shift = np.array([0.13, -0.07])
    values = np.tile(shift, (3, 3, 1))
    out = ffd.deform(t_box, values)
    assert np.abs(out.nodes - (t_box.base_mesh.nodes + shift)).max() < 1e-12


def test_locality_of_single_control_point():
    mesh = M.generate_channel(0.2)
    layout = ffd.dof_layout("channel")
    box = ffd.embed(mesh, layout.degrees, layout.grid_dims)
    dofs = np.zeros(layout.n_dofs)
    dofs[6] = 0.3  # control point column 3, bottom row, y direction
    out = ffd.deform(box, layout.displacement_from_dofs(dofs))
    ku = box.spline0.knots_u
    support = (ku.knots[3], ku.knots[3 + ku.degree + 1])
    u = box.param_coords[:, 0]
    outside = (u < support[0] - 1e-12) | (u > support[1] + 1e-12)
    assert outside.any()
    moved = np.abs(out.nodes - mesh.nodes).max(axis=1)
    assert moved[outside].max() < 1e-12
    assert moved[~outside].max() > 1e-3


def test_dof_layout_tjunction():
    layout = ffd.dof_layout("tjunction")
    assert layout.n_dofs == 18
    assert layout.n_discrete_actions == 36
    assert layout.grid_dims == (3, 3)
    assert layout.movable.all()


def test_dof_layout_channel():
    layout = ffd.dof_layout("channel")
    assert layout.n_dofs == 18
    assert layout.grid_dims == (8, 3)
    # x never movable; first and last columns fully frozen
    assert not layout.movable[:, :, 0].any()
    assert not layout.movable[0].any()
    assert not layout.movable[-1].any()
    assert layout.movable[1:-1, :, 1].all()


def test_dof_layout_unknown_case():
    with pytest.raises(ffd.FFDConfigError):
        ffd.dof_layout("nozzle")


def test_displacement_zeroes_frozen_coordinates():
    layout = ffd.dof_layout("channel")
    disp = ffd.ControlDisplacement(np.ones((8, 3, 2)), layout.movable)
    assert disp.values[0].max() == 0.0
    assert disp.values[:, :, 0].max() == 0.0
    assert disp.values[1:-1, :, 1].min() == 1.0


def test_displacement_shape_check(t_box):
    with pytest.raises(ffd.FFDConfigError):
        ffd.deform(t_box, np.zeros((4, 3, 2)))
    layout = ffd.dof_layout("tjunction")
    with pytest.raises(ffd.FFDConfigError):
        layout.displacement_from_dofs(np.zeros(17))


def test_center_control_point_tangling_threshold(t_box):
    """Bisect the downward center-CP displacement to the inversion point."""
    layout = ffd.dof_layout("tjunction")

    def min_area(magnitude):
        dofs = np.zeros(18)
        dofs[2 * 4 + 1] = -magnitude  # center CP, y
        out = ffd.deform(t_box, layout.displacement_from_dofs(dofs))
        return M.min_signed_area(out)

    hi = 0.5
    while min_area(hi) > 0:
        hi *= 2.0
        assert hi < 64.0
    lo = 0.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if min_area(mid) > 0:
            lo = mid
        else:
            hi = mid
    assert min_area(hi) < 0
    assert 0.1 < hi < 16.0  # tangling threshold of the 3x3 quadratic box
