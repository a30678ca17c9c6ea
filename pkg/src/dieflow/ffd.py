"""Free-form deformation: embed a mesh in a spline's parameter space and
deform it by moving control points.

The base mesh is scaled once into the unit square via its bounding box; a
deformed mesh is produced by evaluating the displaced spline at the stored
parametric coordinates and scaling back.  Control-point displacements are
given in physical length units and divided by the bounding-box extents
before they are added to the identity control grid.
"""

from dataclasses import dataclass, field

import numpy as np

from . import spline as sp
from .mesh import TriMesh


class FFDConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FFDBox:
    base_mesh: TriMesh
    spline0: sp.BSpline2D            # identity configuration
    bbox_min: np.ndarray             # (2,)
    bbox_size: np.ndarray            # (2,)
    param_coords: np.ndarray = field(repr=False)  # (n_nodes, 2) in [0,1]^2


def embed(mesh: TriMesh, degrees=(2, 2), grid_dims=(3, 3)) -> FFDBox:
    """Scale the mesh into [0,1]^2 and pair it with an identity spline."""
    lo = mesh.nodes.min(axis=0)
    hi = mesh.nodes.max(axis=0)
    size = hi - lo
    if np.any(size <= 0):
        raise FFDConfigError("mesh bounding box is degenerate")
    params = (mesh.nodes - lo) / size
    return FFDBox(
        base_mesh=mesh,
        spline0=sp.identity_spline(degrees, grid_dims),
        bbox_min=lo,
        bbox_size=size,
        param_coords=params,
    )


@dataclass(frozen=True)
class ControlDisplacement:
    """Physical-unit control-point displacements with a movability mask.

    Frozen (non-movable) coordinates always carry zero displacement.
    """

    values: np.ndarray    # (n_u, n_v, 2)
    movable: np.ndarray   # (n_u, n_v, 2) bool

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        movable = np.asarray(self.movable, dtype=bool)
        if values.shape != movable.shape:
            raise FFDConfigError("displacement and mask shapes differ")
        object.__setattr__(self, "values", np.where(movable, values, 0.0))
        object.__setattr__(self, "movable", movable)

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


def deform(box: FFDBox, displacement) -> TriMesh:
    """Deformed copy of the base mesh; topology and tags are shared.

    ``displacement`` is a ControlDisplacement or a raw (n_u, n_v, 2) array
    of physical-unit offsets.  Tangling is not prevented here; check
    ``min_signed_area`` on the result.
    """
    values = (
        displacement.values
        if isinstance(displacement, ControlDisplacement)
        else np.asarray(displacement, dtype=float)
    )
    if values.shape != box.spline0.control_points.shape:
        raise FFDConfigError(
            f"displacement shape {values.shape} does not match control grid "
            f"{box.spline0.control_points.shape}"
        )
    if not values.any():
        return box.base_mesh
    scaled = values / box.bbox_size
    deformed = box.spline0.with_control_points(box.spline0.control_points + scaled)
    uv = sp.evaluate_many(deformed, box.param_coords)
    nodes = box.bbox_min + uv * box.bbox_size
    return box.base_mesh.with_nodes(nodes)


@dataclass(frozen=True)
class DofLayout:
    """Mapping between the agent's flat DOF vector and the control grid."""

    case: str
    degrees: tuple
    grid_dims: tuple
    movable: np.ndarray = field(repr=False)   # (n_u, n_v, 2) bool
    dof_map: np.ndarray = field(repr=False)   # (n_dofs, 3) -> (iu, iv, axis)

    @property
    def n_dofs(self) -> int:
        return len(self.dof_map)

    @property
    def n_discrete_actions(self) -> int:
        return 2 * self.n_dofs

    def displacement_from_dofs(self, dofs) -> ControlDisplacement:
        dofs = np.asarray(dofs, dtype=float)
        if dofs.shape != (self.n_dofs,):
            raise FFDConfigError(
                f"expected {self.n_dofs} dof values, got shape {dofs.shape}"
            )
        values = np.zeros(self.grid_dims + (2,))
        values[self.dof_map[:, 0], self.dof_map[:, 1], self.dof_map[:, 2]] = dofs
        return ControlDisplacement(values, self.movable)


def dof_layout(case: str) -> DofLayout:
    """Per-case movable control-point coordinates.

    T-junction: a 3x3 grid, every control point free in x and y (18 DOFs).
    Channel: an 8x3 grid; the first and last columns are fully frozen and
    the remaining control points move in y only (18 DOFs).
    """
    if case == "tjunction":
        dims = (3, 3)
        movable = np.ones(dims + (2,), dtype=bool)
        dof_map = [
            (iu, iv, axis)
            for iu in range(3)
            for iv in range(3)
            for axis in range(2)
        ]
    elif case == "channel":
        dims = (8, 3)
        movable = np.zeros(dims + (2,), dtype=bool)
        movable[1:-1, :, 1] = True
        dof_map = [(iu, iv, 1) for iu in range(1, 7) for iv in range(3)]
    else:
        raise FFDConfigError(f"unknown case {case!r}")
    return DofLayout(
        case=case,
        degrees=(2, 2),
        grid_dims=dims,
        movable=movable,
        dof_map=np.array(dof_map, dtype=np.int32),
    )
