"""Hot numeric kernels with selectable numba / pure-numpy backends.

The two inner loops that dominate an environment step are (a) evaluating the
deformation spline at every mesh node and (b) assembling the element
contributions of the stabilized Stokes system.  Both exist here twice: a
scalar-loop version compiled with ``numba.njit`` and a vectorized numpy
fallback.  The active backend is picked once at import time from the
``DIEFLOW_BACKEND`` environment variable (``auto``/``numba``/``numpy``);
``auto`` prefers numba when it imports.

Both implementations produce element values in the same flat triplet layout,
so the caller-side sparse assembly is backend independent.
"""

import os

import numpy as np

BACKEND_ENV_VAR = "DIEFLOW_BACKEND"

try:
    from numba import njit

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False


def select_backend(requested=None):
    """Resolve the backend name; raises on an impossible request."""
    if requested is None:
        requested = os.environ.get(BACKEND_ENV_VAR, "auto")
    requested = requested.strip().lower() or "auto"
    if requested == "auto":
        return "numba" if NUMBA_AVAILABLE else "numpy"
    if requested == "numba":
        if not NUMBA_AVAILABLE:
            raise RuntimeError(
                f"{BACKEND_ENV_VAR}=numba requested but numba is not importable"
            )
        return "numba"
    if requested == "numpy":
        return "numpy"
    raise RuntimeError(
        f"unrecognized {BACKEND_ENV_VAR}={requested!r} (use auto|numba|numpy)"
    )


BACKEND = select_backend()


# ---------------------------------------------------------------------------
# B-spline surface evaluation at many parameter points
# ---------------------------------------------------------------------------

def find_spans_numpy(knots, degree, u):
    """Knot spans for points ``u``; clamped so u=1 lands in the last span."""
    n_basis = len(knots) - degree - 1
    spans = np.searchsorted(knots, u, side="right") - 1
    return np.clip(spans, degree, n_basis - 1)


def basis_values_numpy(knots, degree, u, spans):
    """Non-vanishing basis functions at each u, shape (len(u), degree+1)."""
    npts = len(u)
    values = np.zeros((npts, degree + 1))
    left = np.zeros((npts, degree + 1))
    right = np.zeros((npts, degree + 1))
    values[:, 0] = 1.0
    for j in range(1, degree + 1):
        left[:, j] = u - knots[spans + 1 - j]
        right[:, j] = knots[spans + j] - u
        saved = np.zeros(npts)
        for r in range(j):
            temp = values[:, r] / (right[:, r + 1] + left[:, j - r])
            values[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        values[:, j] = saved
    return values


def bspline_eval_many_numpy(knots_u, degree_u, knots_v, degree_v, cps, uv):
    """Evaluate a tensor-product spline surface at points uv (n, 2).

    cps has shape (n_u, n_v, 2); returns an (n, 2) array.
    """
    spans_u = find_spans_numpy(knots_u, degree_u, uv[:, 0])
    spans_v = find_spans_numpy(knots_v, degree_v, uv[:, 1])
    nu = basis_values_numpy(knots_u, degree_u, uv[:, 0], spans_u)
    nv = basis_values_numpy(knots_v, degree_v, uv[:, 1], spans_v)
    out = np.zeros((len(uv), 2))
    for a in range(degree_u + 1):
        iu = spans_u - degree_u + a
        for b in range(degree_v + 1):
            iv = spans_v - degree_v + b
            out += (nu[:, a] * nv[:, b])[:, None] * cps[iu, iv]
    return out


if NUMBA_AVAILABLE:

    @njit(cache=True, nogil=True)
    def _find_span_nb(knots, degree, u):
        n_basis = knots.shape[0] - degree - 1
        lo = degree
        hi = n_basis
        if u >= knots[n_basis]:
            return n_basis - 1
        while lo + 1 < hi:
            mid = (lo + hi) // 2
            if u < knots[mid]:
                hi = mid
            else:
                lo = mid
        return lo

    @njit(cache=True, nogil=True)
    def _basis_nb(knots, degree, u, span, values, left, right):
        values[0] = 1.0
        for j in range(1, degree + 1):
            left[j] = u - knots[span + 1 - j]
            right[j] = knots[span + j] - u
            saved = 0.0
            for r in range(j):
                temp = values[r] / (right[r + 1] + left[j - r])
                values[r] = saved + right[r + 1] * temp
                saved = left[j - r] * temp
            values[j] = saved

    @njit(cache=True, nogil=True)
    def _bspline_eval_many_nb(knots_u, degree_u, knots_v, degree_v, cps, uv, out):
        nu = np.zeros(degree_u + 1)
        nv = np.zeros(degree_v + 1)
        lu = np.zeros(degree_u + 1)
        ru = np.zeros(degree_u + 1)
        lv = np.zeros(degree_v + 1)
        rv = np.zeros(degree_v + 1)
        for k in range(uv.shape[0]):
            u = uv[k, 0]
            v = uv[k, 1]
            su = _find_span_nb(knots_u, degree_u, u)
            sv = _find_span_nb(knots_v, degree_v, v)
            _basis_nb(knots_u, degree_u, u, su, nu, lu, ru)
            _basis_nb(knots_v, degree_v, v, sv, nv, lv, rv)
            x = 0.0
            y = 0.0
            for a in range(degree_u + 1):
                iu = su - degree_u + a
                for b in range(degree_v + 1):
                    w = nu[a] * nv[b]
                    iv = sv - degree_v + b
                    x += w * cps[iu, iv, 0]
                    y += w * cps[iu, iv, 1]
            out[k, 0] = x
            out[k, 1] = y

    def bspline_eval_many_numba(knots_u, degree_u, knots_v, degree_v, cps, uv):
        out = np.empty((len(uv), 2))
        _bspline_eval_many_nb(
            np.ascontiguousarray(knots_u),
            degree_u,
            np.ascontiguousarray(knots_v),
            degree_v,
            np.ascontiguousarray(cps),
            np.ascontiguousarray(uv),
            out,
        )
        return out


# ---------------------------------------------------------------------------
# P1 triangle geometry and stabilized Stokes element matrices
# ---------------------------------------------------------------------------
#
# Local dof order per element: [v0x, v0y, v1x, v1y, v2x, v2y, p0, p1, p2].
# Element values are returned as an (n_elem, 9, 9) array whose raveled order
# matches the row/col index arrays built by the solver.

def tri_geometry_numpy(nodes, triangles):
    """Signed areas (m,) and P1 shape-function gradients (m, 3, 2)."""
    p = nodes[triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    b = np.stack(
        [p[:, 1, 1] - p[:, 2, 1], p[:, 2, 1] - p[:, 0, 1], p[:, 0, 1] - p[:, 1, 1]],
        axis=1,
    )
    c = np.stack(
        [p[:, 2, 0] - p[:, 1, 0], p[:, 0, 0] - p[:, 2, 0], p[:, 1, 0] - p[:, 0, 0]],
        axis=1,
    )
    grads = np.stack([b, c], axis=2) / (2.0 * areas)[:, None, None]
    return areas, grads


def stokes_element_values_numpy(areas, grads, eta, stab_scale):
    """Element matrices of the PSPG-stabilized Stokes system.

    Viscous block: eta*(grad v : grad w), whose natural outflow condition
    (eta dv/dn - p n = 0) is satisfied exactly by developed channel flow;
    coupling blocks -(p, div w) and -(q, div v); pressure block
    -tau*(grad q, grad p) with tau = stab_scale * h_e^2 / (12 eta),
    h_e^2 = 2*area.
    """
    m = len(areas)
    local = np.zeros((m, 9, 9))
    gg = np.einsum("mid,mjd->mij", grads, grads)
    eta_a = eta * areas
    visc = eta_a[:, None, None] * gg
    for di in range(2):
        local[:, di::2, di::2][:, :3, :3] = visc
    third = areas / 3.0
    for di in range(2):
        gp = -third[:, None] * grads[:, :, di]
        local[:, di:6:2, 6:] = gp[:, :, None]
        local[:, 6:, di:6:2] = gp[:, None, :]
    tau_a = stab_scale * areas * areas / (6.0 * eta)
    local[:, 6:, 6:] = -tau_a[:, None, None] * gg
    return local


def element_shear_rates_numpy(triangles, grads, velocity):
    """Constant-per-element shear rate sqrt(2 eps:eps) of a nodal field."""
    v = velocity[triangles]
    g = np.einsum("mia,mib->mab", v, grads)
    eps = 0.5 * (g + np.transpose(g, (0, 2, 1)))
    return np.sqrt(2.0 * np.einsum("mab,mab->m", eps, eps))


if NUMBA_AVAILABLE:

    @njit(cache=True, nogil=True)
    def _tri_geometry_nb(nodes, triangles, areas, grads):
        for e in range(triangles.shape[0]):
            i0 = triangles[e, 0]
            i1 = triangles[e, 1]
            i2 = triangles[e, 2]
            x0 = nodes[i0, 0]
            y0 = nodes[i0, 1]
            x1 = nodes[i1, 0]
            y1 = nodes[i1, 1]
            x2 = nodes[i2, 0]
            y2 = nodes[i2, 1]
            area = 0.5 * ((x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0))
            areas[e] = area
            inv = 1.0 / (2.0 * area)
            grads[e, 0, 0] = (y1 - y2) * inv
            grads[e, 1, 0] = (y2 - y0) * inv
            grads[e, 2, 0] = (y0 - y1) * inv
            grads[e, 0, 1] = (x2 - x1) * inv
            grads[e, 1, 1] = (x0 - x2) * inv
            grads[e, 2, 1] = (x1 - x0) * inv

    def tri_geometry_numba(nodes, triangles):
        m = len(triangles)
        areas = np.empty(m)
        grads = np.empty((m, 3, 2))
        _tri_geometry_nb(nodes, triangles, areas, grads)
        return areas, grads

    @njit(cache=True, nogil=True)
    def _stokes_values_nb(areas, grads, eta, stab_scale, local):
        for e in range(areas.shape[0]):
            area = areas[e]
            ea = eta[e] * area
            for i in range(3):
                for j in range(3):
                    dot = (
                        grads[e, i, 0] * grads[e, j, 0]
                        + grads[e, i, 1] * grads[e, j, 1]
                    )
                    for di in range(2):
                        local[e, 2 * i + di, 2 * j + di] = ea * dot
            third = area / 3.0
            for i in range(3):
                for di in range(2):
                    gp = -third * grads[e, i, di]
                    for k in range(3):
                        local[e, 2 * i + di, 6 + k] = gp
                        local[e, 6 + k, 2 * i + di] = gp
            tau_a = stab_scale * area * area / (6.0 * eta[e])
            for k in range(3):
                for l in range(3):
                    dot = (
                        grads[e, k, 0] * grads[e, l, 0]
                        + grads[e, k, 1] * grads[e, l, 1]
                    )
                    local[e, 6 + k, 6 + l] = -tau_a * dot

    def stokes_element_values_numba(areas, grads, eta, stab_scale):
        local = np.zeros((len(areas), 9, 9))
        _stokes_values_nb(areas, grads, eta, stab_scale, local)
        return local

    @njit(cache=True, nogil=True)
    def _shear_rates_nb(triangles, grads, velocity, out):
        for e in range(triangles.shape[0]):
            g00 = 0.0
            g01 = 0.0
            g10 = 0.0
            g11 = 0.0
            for i in range(3):
                n = triangles[e, i]
                vx = velocity[n, 0]
                vy = velocity[n, 1]
                g00 += vx * grads[e, i, 0]
                g01 += vx * grads[e, i, 1]
                g10 += vy * grads[e, i, 0]
                g11 += vy * grads[e, i, 1]
            e01 = 0.5 * (g01 + g10)
            out[e] = np.sqrt(2.0 * (g00 * g00 + g11 * g11 + 2.0 * e01 * e01))

    def element_shear_rates_numba(triangles, grads, velocity):
        out = np.empty(len(triangles))
        _shear_rates_nb(triangles, grads, np.ascontiguousarray(velocity), out)
        return out


if BACKEND == "numba":
    bspline_eval_many = bspline_eval_many_numba
    tri_geometry = tri_geometry_numba
    stokes_element_values = stokes_element_values_numba
    element_shear_rates = element_shear_rates_numba
else:
    bspline_eval_many = bspline_eval_many_numpy
    tri_geometry = tri_geometry_numpy
    stokes_element_values = stokes_element_values_numpy
    element_shear_rates = element_shear_rates_numpy


def warmup():
    """Trigger JIT compilation of every kernel on toy inputs."""
    knots = np.array([0.0, 0.0, 0.0, 1.0, 1.0, 1.0])
    cps = np.zeros((3, 3, 2))
    cps[:, :, 0] = np.array([0.0, 0.5, 1.0])[:, None]
    cps[:, :, 1] = np.array([0.0, 0.5, 1.0])[None, :]
    uv = np.array([[0.25, 0.75]])
    bspline_eval_many(knots, 2, knots, 2, cps, uv)
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    tris = np.array([[0, 1, 2], [1, 3, 2]], dtype=np.int32)
    areas, grads = tri_geometry(nodes, tris)
    stokes_element_values(areas, grads, np.ones(2), 1.0)
    element_shear_rates(tris, grads, np.zeros((4, 2)))
