import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dieflow import mesh as M
from dieflow import objectives as O
from dieflow import solver as S
from dieflow.mesh import BoundaryTag as BT

NEWTONIAN = S.FluidProperties(A=10935.0, B=0.433, C=0.0)


def rect_bcs(vx=0.45):
    return {
        BT.INFLOW: S.Dirichlet((vx, 0.0)),
        BT.WALL: S.NO_SLIP,
        BT.OUT: S.TRACTION_FREE,
    }


# --- Carreau law --------------------------------------------------------

def test_carreau_zero_shear():
    assert S.carreau_viscosity(0.0, S.MELT) == 10935.0


def test_carreau_transition_rate():
    # direct evaluation at gamma_dot = 1/B
    expected = 10935.0 / 2.0 ** 0.699
    assert S.carreau_viscosity(1.0 / 0.433, S.MELT) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(6735.8, abs=0.5)


def test_carreau_newtonian_limit():
    for g in (0.0, 0.5, 10.0, 1e6):
        assert S.carreau_viscosity(g, NEWTONIAN) == 10935.0


def test_carreau_negative_rate_rejected():
    with pytest.raises(S.ShearRateDomainError):
        S.carreau_viscosity(-1.0, S.MELT)


@settings(max_examples=100, deadline=None)
@given(
    g1=st.floats(0, 1e6, allow_nan=False),
    g2=st.floats(0, 1e6, allow_nan=False),
)
def test_carreau_shear_thinning_monotone(g1, g2):
    lo, hi = sorted((g1, g2))
    assert S.carreau_viscosity(lo, S.MELT) >= S.carreau_viscosity(hi, S.MELT)
    assert 0 < S.carreau_viscosity(hi, S.MELT) <= S.MELT.A


def test_fluid_properties_validation():
    with pytest.raises(ValueError):
        S.FluidProperties(A=-1, B=0.4, C=0.5)
    with pytest.raises(ValueError):
        S.FluidProperties(A=1, B=-0.1, C=0.5)
    with pytest.raises(ValueError):
        S.FluidProperties(A=1, B=0.1, C=1.0)


# --- shear rate ---------------------------------------------------------

def test_shear_rate_zero_gradient():
    assert S.shear_rate(np.zeros((2, 2))) == 0.0


def test_shear_rate_simple_shear():
    # dvx/dy = k: eps:eps = k^2/2, rate = |k|
    for k in (0.7, -1.3):
        assert S.shear_rate([[0.0, k], [0.0, 0.0]]) == pytest.approx(abs(k), rel=1e-14)


def test_shear_rate_pure_rotation():
    assert S.shear_rate([[0.0, 1.0], [-1.0, 0.0]]) == 0.0


# --- solve_flow ---------------------------------------------------------

def test_zero_inflow_gives_trivial_solution():
    m = M.generate_rectangle(2.0, 1.0, 0.2)
    sol = S.solve_flow(m, S.MELT, rect_bcs(vx=0.0))
    assert sol.converged
    assert np.abs(sol.velocity).max() == 0.0
    assert np.abs(sol.pressure - sol.pressure[0]).max() < 1e-12


def test_poiseuille_outlet_profile():
    m = M.generate_rectangle(4.0, 1.0, 0.05)
    sol = S.solve_flow(m, NEWTONIAN, rect_bcs())
    assert sol.converged
    out_nodes = np.unique(m.edges_with_tag(BT.OUT))
    y = m.nodes[out_nodes, 1]
    vx = sol.velocity[out_nodes, 0]
    order = np.argsort(y)
    y, vx = y[order], vx[order]
    q = np.trapezoid(vx, y)
    vmax = 1.5 * q  # parabolic profile with the same flow rate, height 1
    parabola = vmax * (1.0 - (2.0 * y) ** 2)
    assert np.abs(vx - parabola).max() < 0.02 * vmax


def test_dirichlet_values_honoured():
    m = M.generate_rectangle(2.0, 1.0, 0.15)
    sol = S.solve_flow(m, NEWTONIAN, rect_bcs())
    wall_nodes = np.unique(m.edges_with_tag(BT.WALL))
    assert np.abs(sol.velocity[wall_nodes]).max() < 1e-12
    in_nodes = np.unique(m.edges_with_tag(BT.INFLOW))
    interior_in = np.setdiff1d(in_nodes, wall_nodes)
    assert np.abs(sol.velocity[interior_in, 0] - 0.45).max() < 1e-12
    assert np.abs(sol.velocity[interior_in, 1]).max() < 1e-12


def test_newtonian_linearity():
    m = M.generate_rectangle(2.0, 1.0, 0.15)
    s1 = S.solve_flow(m, NEWTONIAN, rect_bcs(0.45))
    s2 = S.solve_flow(m, NEWTONIAN, rect_bcs(0.90))
    scale = np.abs(s2.velocity).max()
    assert np.abs(s2.velocity - 2.0 * s1.velocity).max() < 1e-8 * scale


def test_mass_balance_both_geometries():
    t = M.generate_tjunction(0.08)
    st_ = S.solve_flow(t, S.MELT, S.default_bcs("tjunction"))
    assert st_.converged
    total = sum(
        O.boundary_mass_flow(t, st_, tag, 1000.0)
        for tag in (BT.INFLOW, BT.OUT_LEFT, BT.OUT_RIGHT)
    )
    m_in = O.boundary_mass_flow(t, st_, BT.INFLOW, 1000.0)
    assert abs(total) / abs(m_in) < 1e-2

    c = M.generate_channel(0.1)
    sc = S.solve_flow(c, S.MELT, S.default_bcs("channel"))
    assert sc.converged
    m_in = O.boundary_mass_flow(c, sc, BT.INFLOW, 1000.0)
    m_out = O.boundary_mass_flow(c, sc, BT.OUT, 1000.0)
    assert abs(m_in + m_out) / abs(m_in) < 1e-2


def test_tjunction_mirror_antisymmetry():
    m = M.generate_tjunction(0.1)
    sol = S.solve_flow(m, S.MELT, S.default_bcs("tjunction"))
    lookup = {(round(x, 9), round(y, 9)): i for i, (x, y) in enumerate(m.nodes)}
    vmax = np.abs(sol.velocity).max()
    worst = 0.0
    for i, (x, y) in enumerate(m.nodes):
        j = lookup[(round(3.0 - x, 9), round(y, 9))]
        worst = max(worst, abs(sol.velocity[i, 0] + sol.velocity[j, 0]))
    assert worst <= 0.01 * vmax


def test_picard_update_contraction():
    m = M.generate_rectangle(2.0, 1.0, 0.1)
    sol = S.solve_flow(m, S.MELT, rect_bcs())
    assert sol.converged
    updates = sol.picard_updates
    assert len(updates) >= 4
    for a, b in zip(updates[2:], updates[3:]):
        assert b <= a


def test_warm_start_shortens_iteration():
    m = M.generate_rectangle(2.0, 1.0, 0.1)
    cold = S.solve_flow(m, S.MELT, rect_bcs())
    warm = S.solve_flow(m, S.MELT, rect_bcs(), eta0=cold.element_viscosity)
    assert warm.converged
    assert warm.picard_iterations < cold.picard_iterations
    assert np.abs(warm.velocity - cold.velocity).max() < 1e-4


def test_tangled_mesh_raises():
    m = M.generate_rectangle(2.0, 1.0, 0.3)
    bent = m.nodes.copy()
    interior = np.setdiff1d(
        np.arange(m.n_nodes), np.unique(m.boundary_edges.reshape(-1))
    )
    bent[interior[0]] += 10.0
    with pytest.raises(S.SolverFailure):
        S.solve_flow(m.with_nodes(bent), S.MELT, rect_bcs())


def test_missing_bc_raises():
    m = M.generate_rectangle(2.0, 1.0, 0.3)
    with pytest.raises(ValueError):
        S.solve_flow(m, S.MELT, {BT.INFLOW: S.Dirichlet((0.45, 0.0))})


def test_settings_validation():
    with pytest.raises(ValueError):
        S.SolverSettings(picard_tol=0.0)
    with pytest.raises(ValueError):
        S.SolverSettings(max_picard=0)


def test_default_bcs_shapes():
    t = S.default_bcs("tjunction")
    assert np.allclose(t[BT.INFLOW].vector(), [0.0, -0.45])
    c = S.default_bcs("channel")
    assert np.allclose(c[BT.INFLOW].vector(), [0.45, 0.0])
    with pytest.raises(ValueError):
        S.default_bcs("other")
