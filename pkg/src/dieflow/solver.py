"""Stabilized finite-element solver for shear-thinning Stokes flow.

Stationary, incompressible, inertia-free momentum balance with the Carreau
viscosity law, discretized with equal-order linear triangles and PSPG
pressure stabilization.  The nonlinear viscosity is handled by Picard
(fixed-point) iteration: each pass assembles the system with the viscosity
evaluated at the previous velocity field's element shear rates and performs
one sparse direct solve.

The viscosity is non-dimensionalized by the zero-shear value internally so
matrix entries stay O(1); the reported pressure is scaled back.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from . import _kernels
from .mesh import BoundaryTag, TriMesh


class SolverFailure(RuntimeError):
    """Tangled mesh, singular linear system, or diverging Picard loop."""


class ShearRateDomainError(ValueError):
    pass


@dataclass(frozen=True)
class FluidProperties:
    """Carreau parameters: eta = A / (1 + B * gamma_dot)**C, plus density."""

    A: float
    B: float
    C: float
    rho: float = 1000.0

    def __post_init__(self):
        if self.A <= 0:
            raise ValueError("zero-shear viscosity A must be positive")
        if self.B < 0:
            raise ValueError("reciprocal transition rate B must be non-negative")
        if not 0.0 <= self.C < 1.0:
            raise ValueError("slope C must lie in [0, 1)")
        if self.rho <= 0:
            raise ValueError("density must be positive")


#: Shear-thinning melt used by both test cases.
MELT = FluidProperties(A=10935.0, B=0.433, C=0.699)


def carreau_viscosity(gamma_dot, props: FluidProperties):
    """Carreau viscosity; accepts scalars or arrays of shear rates."""
    gamma_dot = np.asarray(gamma_dot, dtype=float)
    if np.any(gamma_dot < 0):
        raise ShearRateDomainError("shear rate must be non-negative")
    eta = props.A / (1.0 + props.B * gamma_dot) ** props.C
    return float(eta) if eta.ndim == 0 else eta


def shear_rate(grad_v) -> float:
    """Scalar invariant sqrt(2 eps:eps) of a 2x2 velocity gradient."""
    g = np.asarray(grad_v, dtype=float)
    eps = 0.5 * (g + g.T)
    return float(np.sqrt(2.0 * np.sum(eps * eps)))


@dataclass(frozen=True)
class Dirichlet:
    velocity: tuple

    def vector(self):
        return np.asarray(self.velocity, dtype=float)


class NoSlip:
    pass


class TractionFree:
    pass


NO_SLIP = NoSlip()
TRACTION_FREE = TractionFree()


def default_bcs(case: str) -> dict:
    """Block inflow profiles of the two test cases plus no-slip walls and
    traction-free outflows."""
    if case == "tjunction":
        return {
            BoundaryTag.INFLOW: Dirichlet((0.0, -0.45)),
            BoundaryTag.WALL: NO_SLIP,
            BoundaryTag.OUT_LEFT: TRACTION_FREE,
            BoundaryTag.OUT_RIGHT: TRACTION_FREE,
        }
    if case == "channel":
        return {
            BoundaryTag.INFLOW: Dirichlet((0.45, 0.0)),
            BoundaryTag.WALL: NO_SLIP,
            BoundaryTag.OUT: TRACTION_FREE,
        }
    raise ValueError(f"unknown case {case!r}")


@dataclass(frozen=True)
class SolverSettings:
    picard_tol: float = 1e-6
    max_picard: int = 50
    stab_scale: float = 1.0
    divergence_ratio: float = 10.0

    def __post_init__(self):
        if self.picard_tol <= 0:
            raise ValueError("picard_tol must be positive")
        if self.max_picard < 1:
            raise ValueError("max_picard must be at least 1")


@dataclass(frozen=True)
class FlowSolution:
    velocity: np.ndarray = field(repr=False)   # (n, 2)
    pressure: np.ndarray = field(repr=False)   # (n,)
    picard_iterations: int = 0
    converged: bool = False
    picard_updates: tuple = ()                 # relative velocity changes
    element_viscosity: np.ndarray | None = field(default=None, repr=False)


def _dirichlet_velocity(mesh: TriMesh, bcs: dict):
    """Node -> prescribed velocity map; no-slip overrides inflow at shared
    corner nodes."""
    values = {}
    for tag in sorted(bcs, key=int):
        cond = bcs[tag]
        if isinstance(cond, Dirichlet):
            vec = cond.vector()
            for a, b in mesh.edges_with_tag(tag):
                values[int(a)] = vec
                values[int(b)] = vec
    for tag in sorted(bcs, key=int):
        if isinstance(bcs[tag], NoSlip):
            for a, b in mesh.edges_with_tag(tag):
                values[int(a)] = np.zeros(2)
                values[int(b)] = np.zeros(2)
    return values


def _triplet_indices(triangles, n_nodes):
    """Row/col arrays for the per-element 9x9 blocks, matching the kernels'
    value layout."""
    tris = triangles.astype(np.int64)
    m = len(tris)
    ldofs = np.empty((m, 9), dtype=np.int64)
    ldofs[:, 0:6:2] = 2 * tris
    ldofs[:, 1:6:2] = 2 * tris + 1
    ldofs[:, 6:9] = 2 * n_nodes + tris
    rows = np.repeat(ldofs, 9, axis=1).reshape(-1)
    cols = np.tile(ldofs, (1, 9)).reshape(-1)
    return rows, cols


def solve_flow(
    mesh: TriMesh,
    props: FluidProperties = MELT,
    bcs: dict | None = None,
    settings: SolverSettings | None = None,
    eta0: np.ndarray | None = None,
) -> FlowSolution:
    """Solve the stabilized Stokes problem on ``mesh``.

    ``eta0`` optionally seeds the Picard loop with per-element viscosities
    (e.g. from the previous solve on a slightly deformed mesh); the default
    starts from the zero-shear value.

    Raises SolverFailure on a tangled mesh, a breakdown of the sparse
    factorization, or a diverging Picard iteration.  A solution that merely
    fails to reach the tolerance within ``max_picard`` passes is returned
    with ``converged=False``.
    """
    if settings is None:
        settings = SolverSettings()
    if bcs is None:
        raise ValueError("boundary conditions are required")
    missing = mesh.tags_present - set(bcs)
    if missing:
        raise ValueError(f"boundary conditions missing for tags {missing}")

    n = mesh.n_nodes
    areas, grads = _kernels.tri_geometry(mesh.nodes, mesh.triangles)
    if areas.min() <= 0:
        raise SolverFailure("tangled mesh (non-positive element area)")

    bc_values = _dirichlet_velocity(mesh, bcs)
    dir_dofs = []
    dir_vals = []
    for node in sorted(bc_values):
        vec = bc_values[node]
        dir_dofs.extend((2 * node, 2 * node + 1))
        dir_vals.extend((vec[0], vec[1]))
    if not any(isinstance(c, TractionFree) for c in bcs.values()):
        # no natural outflow: pin one pressure value to fix the constant
        dir_dofs.append(2 * n)
        dir_vals.append(0.0)
    dir_dofs = np.array(dir_dofs, dtype=np.int64)
    dir_vals = np.array(dir_vals)

    n_dof = 3 * n
    rows, cols = _triplet_indices(mesh.triangles, n)
    is_dirichlet = np.zeros(n_dof, dtype=bool)
    is_dirichlet[dir_dofs] = True
    keep = ~is_dirichlet[rows]

    rows_full = np.concatenate([rows, dir_dofs])
    cols_full = np.concatenate([cols, dir_dofs])
    rhs = np.zeros(n_dof)
    rhs[dir_dofs] = dir_vals

    eta_scale = props.A
    if eta0 is not None and len(eta0) == len(areas):
        eta = np.asarray(eta0, dtype=float) / eta_scale
    else:
        eta = np.ones(len(areas))  # scaled zero-shear start
    velocity = np.zeros((n, 2))
    pressure = np.zeros(n)
    updates = []
    converged = False
    iteration = 0

    for iteration in range(1, settings.max_picard + 1):
        values = _kernels.stokes_element_values(
            areas, grads, eta, settings.stab_scale
        ).reshape(-1)
        values = np.where(keep, values, 0.0)
        data = np.concatenate([values, np.ones(len(dir_dofs))])
        matrix = sparse.coo_matrix(
            (data, (rows_full, cols_full)), shape=(n_dof, n_dof)
        ).tocsc()
        try:
            lu = spla.splu(matrix)
            x = lu.solve(rhs)
        except RuntimeError as exc:
            raise SolverFailure(f"sparse factorization failed: {exc}") from exc
        if not np.all(np.isfinite(x)):
            raise SolverFailure("linear solve produced non-finite values")

        v_new = x[: 2 * n].reshape(n, 2)
        pressure = x[2 * n:] * eta_scale
        norm_new = float(np.linalg.norm(v_new))
        norm_old = float(np.linalg.norm(velocity))
        if iteration > 1 and norm_old > 0 and norm_new > settings.divergence_ratio * norm_old:
            raise SolverFailure(
                f"Picard iteration diverged (|v| grew {norm_new / norm_old:.1f}x)"
            )
        rel = np.linalg.norm(v_new - velocity) / norm_new if norm_new > 0 else 0.0
        updates.append(rel)
        velocity = v_new
        if rel < settings.picard_tol:
            converged = True
            break
        rates = _kernels.element_shear_rates(mesh.triangles, grads, velocity)
        eta = carreau_viscosity(rates, props) / eta_scale

    return FlowSolution(
        velocity=velocity,
        pressure=pressure,
        picard_iterations=iteration,
        converged=converged,
        picard_updates=tuple(updates),
        element_viscosity=eta * eta_scale,
    )
