"""Tensor-product B-spline evaluation.

Open (clamped) uniform knot vectors on [0, 1], degree-generic Cox-de Boor
basis recursion, and a Greville-point identity configuration that maps the
unit square onto itself.  All values are plain numpy; instances are
immutable and safe to share between threads.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels


class SplineDomainError(ValueError):
    """Parameter outside the [0, 1] domain."""


class SplineConfigError(ValueError):
    """Inconsistent degree / knot / control-grid combination."""


@dataclass(frozen=True)
class KnotVector:
    degree: int
    knots: np.ndarray = field(repr=False)

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", knots)
        if self.degree < 0:
            raise SplineConfigError("degree must be non-negative")
        if len(knots) < 2 * (self.degree + 1):
            raise SplineConfigError("too few knots for degree")
        if np.any(np.diff(knots) < 0):
            raise SplineConfigError("knots must be non-decreasing")
        head = knots[: self.degree + 1]
        tail = knots[-(self.degree + 1):]
        if not (np.all(head == 0.0) and np.all(tail == 1.0)):
            raise SplineConfigError("knot vector must be clamped to [0, 1]")

    @property
    def n_basis(self) -> int:
        return len(self.knots) - self.degree - 1

    @classmethod
    def open_uniform(cls, degree: int, n_basis: int) -> "KnotVector":
        """Clamped knot vector with evenly spaced interior knots."""
        if n_basis < degree + 1:
            raise SplineConfigError(
                f"need at least degree+1={degree + 1} basis functions, got {n_basis}"
            )
        n_interior = n_basis - degree - 1
        interior = np.linspace(0.0, 1.0, n_interior + 2)[1:-1]
        knots = np.concatenate(
            [np.zeros(degree + 1), interior, np.ones(degree + 1)]
        )
        return cls(degree, knots)


def find_span(kv: KnotVector, u: float) -> int:
    if not 0.0 <= u <= 1.0:
        raise SplineDomainError(f"parameter {u} outside [0, 1]")
    span = int(np.searchsorted(kv.knots, u, side="right")) - 1
    return min(max(span, kv.degree), kv.n_basis - 1)


def eval_basis(kv: KnotVector, u: float):
    """Span index and the degree+1 non-vanishing basis values at u.

    The values are the classic triangular Cox-de Boor recursion; they are
    non-negative and sum to one.
    """
    span = find_span(kv, u)
    values = _kernels.basis_values_numpy(
        kv.knots, kv.degree, np.array([u]), np.array([span])
    )[0]
    return span, values


def greville_abscissae(kv: KnotVector) -> np.ndarray:
    """Per-basis parameter averages; control points placed there reproduce
    the identity map."""
    if kv.degree == 0:
        return 0.5 * (kv.knots[:-1] + kv.knots[1:])
    idx = np.arange(kv.n_basis)
    return np.array(
        [kv.knots[i + 1: i + kv.degree + 1].mean() for i in idx]
    )


@dataclass(frozen=True)
class BSpline2D:
    knots_u: KnotVector
    knots_v: KnotVector
    control_points: np.ndarray = field(repr=False)  # (n_u, n_v, 2)

    def __post_init__(self):
        cps = np.asarray(self.control_points, dtype=float)
        object.__setattr__(self, "control_points", cps)
        if cps.ndim != 3 or cps.shape[2] != 2:
            raise SplineConfigError("control points must have shape (n_u, n_v, 2)")
        if cps.shape[0] != self.knots_u.n_basis or cps.shape[1] != self.knots_v.n_basis:
            raise SplineConfigError(
                "control grid inconsistent with knot vectors: "
                f"{cps.shape[:2]} vs ({self.knots_u.n_basis}, {self.knots_v.n_basis})"
            )

    @property
    def grid_dims(self):
        return self.control_points.shape[:2]

    @property
    def degrees(self):
        return (self.knots_u.degree, self.knots_v.degree)

    def with_control_points(self, cps: np.ndarray) -> "BSpline2D":
        return BSpline2D(self.knots_u, self.knots_v, cps)


def evaluate(s: BSpline2D, uv) -> np.ndarray:
    """Surface point sum_ij N_i(u) M_j(v) P_ij at a single (u, v)."""
    u, v = float(uv[0]), float(uv[1])
    span_u, nu = eval_basis(s.knots_u, u)
    span_v, nv = eval_basis(s.knots_v, v)
    du, dv = s.degrees
    point = np.zeros(2)
    for a in range(du + 1):
        for b in range(dv + 1):
            point += nu[a] * nv[b] * s.control_points[span_u - du + a, span_v - dv + b]
    return point


def evaluate_many(s: BSpline2D, uv: np.ndarray) -> np.ndarray:
    """Batched surface evaluation at uv (n, 2); the fast path for meshes."""
    uv = np.asarray(uv, dtype=float)
    if uv.ndim != 2 or uv.shape[1] != 2:
        raise SplineConfigError("uv must have shape (n, 2)")
    if np.any(uv < 0.0) or np.any(uv > 1.0):
        raise SplineDomainError("parameters outside [0, 1]^2")
    return _kernels.bspline_eval_many(
        s.knots_u.knots,
        s.knots_u.degree,
        s.knots_v.knots,
        s.knots_v.degree,
        s.control_points,
        uv,
    )


def identity_spline(degrees=(2, 2), grid_dims=(3, 3)) -> BSpline2D:
    """Spline whose map is the identity on the unit square.

    Control points sit at the Greville abscissae of the open uniform knot
    vectors, so evaluate(s, (u, v)) == (u, v) up to roundoff.
    """
    ku = KnotVector.open_uniform(degrees[0], grid_dims[0])
    kv = KnotVector.open_uniform(degrees[1], grid_dims[1])
    gu = greville_abscissae(ku)
    gv = greville_abscissae(kv)
    cps = np.empty((grid_dims[0], grid_dims[1], 2))
    cps[:, :, 0] = gu[:, None]
    cps[:, :, 1] = gv[None, :]
    return BSpline2D(ku, kv, cps)
