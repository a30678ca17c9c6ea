"""Scalar objectives derived from a flow solution.

Boundary mass flows use edge-wise trapezoidal quadrature of rho*v.n with
outward normals, which is exact for linear velocity fields on straight
edges.  From these come the mass-flow ratio between the T-junction's
outflows and the patch-wise outflow-homogeneity criterion of the channel.
"""

from dataclasses import dataclass, field

import numpy as np

from .mesh import BoundaryTag, TriMesh
from .solver import FlowSolution


class DegenerateFlowError(RuntimeError):
    pass


def _edge_flows(m: TriMesh, velocity, edges, rho):
    """Per-edge mass flow rho * integral(v.n); boundary edges are oriented
    with the interior on the left, so n = (dy, -dx)/L is outward."""
    a = m.nodes[edges[:, 0]]
    b = m.nodes[edges[:, 1]]
    d = b - a
    normals = np.stack([d[:, 1], -d[:, 0]], axis=1)  # length-weighted
    va = velocity[edges[:, 0]]
    vb = velocity[edges[:, 1]]
    return rho * 0.5 * np.einsum("ka,ka->k", va + vb, normals)


def boundary_mass_flow(m: TriMesh, sol: FlowSolution, tag: BoundaryTag, rho: float) -> float:
    """Signed mass flow through the tagged boundary (positive = leaving)."""
    edges = m.edges_with_tag(tag)
    if len(edges) == 0:
        raise ValueError(f"mesh has no boundary edges tagged {tag!r}")
    return float(_edge_flows(m, sol.velocity, edges, rho).sum())


def mass_flow_ratio(m: TriMesh, sol: FlowSolution, rho: float = 1000.0) -> float:
    """|m_left / m_right| between the two T-junction outflows.

    Both flows use outward normals; the density cancels exactly.
    """
    m_left = boundary_mass_flow(m, sol, BoundaryTag.OUT_LEFT, rho)
    m_right = boundary_mass_flow(m, sol, BoundaryTag.OUT_RIGHT, rho)
    if m_right == 0.0 or abs(m_right) < 1e-14 * abs(m_left):
        raise DegenerateFlowError("right outflow carries no flow")
    return abs(m_left / m_right)


@dataclass(frozen=True)
class PatchSpec:
    """Contiguous partition of one outflow boundary's edges."""

    tag: BoundaryTag
    edge_indices: tuple = field(repr=False)  # tuple of int arrays into edges_with_tag
    lengths: np.ndarray = field(repr=False)  # (k,)

    @property
    def n_patches(self) -> int:
        return len(self.edge_indices)


def equal_patches(m: TriMesh, tag: BoundaryTag, k: int = 3) -> PatchSpec:
    """Split the tagged boundary into k contiguous patches of (near-)equal
    length, ordered along the boundary."""
    edges = m.edges_with_tag(tag)
    if len(edges) < k:
        raise ValueError(f"only {len(edges)} edges for {k} patches")
    mids = 0.5 * (m.nodes[edges[:, 0]] + m.nodes[edges[:, 1]])
    span = mids.max(axis=0) - mids.min(axis=0)
    order = np.argsort(mids[:, int(np.argmax(span))], kind="stable")
    lengths = np.linalg.norm(
        m.nodes[edges[:, 1]] - m.nodes[edges[:, 0]], axis=1
    )[order]
    total = lengths.sum()
    cum_mid = np.cumsum(lengths) - 0.5 * lengths
    patch_of = np.minimum((k * cum_mid / total).astype(int), k - 1)
    indices = tuple(order[patch_of == p] for p in range(k))
    patch_lengths = np.array([lengths[patch_of == p].sum() for p in range(k)])
    if any(len(ix) == 0 for ix in indices):
        raise ValueError("patch split produced an empty patch")
    return PatchSpec(tag=tag, edge_indices=indices, lengths=patch_lengths)


def velocity_ratio_quality(omega: float) -> float:
    """Patch quality from the patch/overall velocity ratio:
    (omega - 1) / max(omega, 1); 0 is optimal."""
    return (omega - 1.0) / max(omega, 1.0)


@dataclass(frozen=True)
class PatchQuality:
    v_out: np.ndarray     # patch-average outward velocities
    omega: np.ndarray     # ratios to the overall average
    q: np.ndarray         # per-patch quality values


def patch_quality(m: TriMesh, sol: FlowSolution, patches: PatchSpec, rho: float) -> PatchQuality:
    """Patch-average velocities, their ratios to the boundary average, and
    the per-patch quality values."""
    edges = m.edges_with_tag(patches.tag)
    flows = _edge_flows(m, sol.velocity, edges, rho)
    total_len = patches.lengths.sum()
    v_avg = flows.sum() / (rho * total_len)
    if v_avg == 0.0:
        raise DegenerateFlowError("outflow boundary carries no flow")
    v_out = np.array(
        [
            flows[idx].sum() / (rho * patches.lengths[p])
            for p, idx in enumerate(patches.edge_indices)
        ]
    )
    omega = v_out / v_avg
    q = np.array([velocity_ratio_quality(w) for w in omega])
    return PatchQuality(v_out=v_out, omega=omega, q=q)


def quality_sum(q_values) -> float:
    """Sum of squared per-patch qualities; 0 iff every patch is optimal."""
    q = np.asarray(q_values, dtype=float)
    return float(np.sum(q * q))


@dataclass(frozen=True)
class ObjectiveReport:
    mass_flows: dict
    mu: float | None = None
    patch: PatchQuality | None = None
    q_total: float | None = None

    def csv_fields(self) -> dict:
        out = {f"mdot_{BoundaryTag(t).name.lower()}": v for t, v in self.mass_flows.items()}
        if self.mu is not None:
            out["mu"] = self.mu
        if self.patch is not None:
            for i, q in enumerate(self.patch.q):
                out[f"q_out_{i + 1}"] = q
        if self.q_total is not None:
            out["q_total"] = self.q_total
        return out


def evaluate_objectives(
    m: TriMesh, sol: FlowSolution, case: str, rho: float = 1000.0, n_patches: int = 3
) -> ObjectiveReport:
    """Case-appropriate report: mass flows everywhere, plus the flow ratio
    (T-junction) or patch qualities and their squared sum (channel)."""
    flows = {
        int(tag): boundary_mass_flow(m, sol, tag, rho)
        for tag in sorted(m.tags_present, key=int)
    }
    if case == "tjunction":
        return ObjectiveReport(mass_flows=flows, mu=mass_flow_ratio(m, sol, rho))
    if case == "channel":
        patches = equal_patches(m, BoundaryTag.OUT, n_patches)
        pq = patch_quality(m, sol, patches, rho)
        return ObjectiveReport(mass_flows=flows, patch=pq, q_total=quality_sum(pq.q))
    raise ValueError(f"unknown case {case!r}")
