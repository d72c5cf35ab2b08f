"""Shared oracles for the test suite.

The quadrature oracle is deliberately independent of the production code:
kink lines (clamp thresholds, zero level sets) are located with shapely's
geometry kernel, each kink-free piece is fan-triangulated, split into 64
uniform sub-triangles, and integrated with a tensor Gauss rule exact to
polynomial degree 10.  Agreement with the closed-form integrals therefore
validates both the clipping geometry and the integration formulas.
"""

from __future__ import annotations

import numpy as np
import pytest
from shapely.geometry import LineString, Polygon
from shapely.ops import split as shapely_split

# tensor (Duffy) Gauss rule on the reference triangle, exact to degree 10
_GX, _GW = np.polynomial.legendre.leggauss(6)
_GX = 0.5 * (_GX + 1.0)
_GW = 0.5 * _GW
_U, _V = np.meshgrid(_GX, _GX, indexing="ij")
DUFFY_W = (np.outer(_GW, _GW) * (1.0 - _U)).ravel()          # sums to 1/2
_L1 = _U.ravel()
_L2 = (_V * (1.0 - _U)).ravel()
DUFFY_BARY = np.column_stack([1.0 - _L1 - _L2, _L1, _L2])     # (36, 3)


def subdivide_triangle(coords, k=8):
    """Uniform subdivision of one triangle into k^2 congruent triangles."""
    v0, v1, v2 = np.asarray(coords, dtype=float)
    e1, e2 = v1 - v0, v2 - v0
    out = []
    for i in range(k):
        for j in range(k - i):
            a = v0 + e1 * (i / k) + e2 * (j / k)
            out.append([a, a + e1 / k, a + e2 / k])
            if j < k - i - 1:
                out.append([a + e1 / k, a + e1 / k + e2 / k, a + e2 / k])
    return np.asarray(out)


def integrate_smooth(coords, integrand, k=8):
    """Composite degree-10 rule on k^2 uniform sub-triangles of one triangle."""
    subs = subdivide_triangle(coords, k)
    pts = np.einsum("ql,nlj->nqj", DUFFY_BARY, subs)
    e1 = subs[:, 1] - subs[:, 0]
    e2 = subs[:, 2] - subs[:, 0]
    jac = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])   # twice the area
    vals = integrand(pts.reshape(-1, 2)).reshape(pts.shape[:2])
    return float(np.einsum("n,q,nq->", jac, DUFFY_W, vals))


def _affine_from_nodal(coords, nodal):
    """Coefficients (c0, gx, gy) of the affine function with given vertex values."""
    mat = np.column_stack([np.ones(3), coords])
    return np.linalg.solve(mat, np.asarray(nodal, dtype=float))


def _level_line(coeffs, level, reach=100.0):
    """A long segment along {c0 + g . x = level}, or None for constant fields."""
    c0, gx, gy = coeffs
    grad = np.array([gx, gy])
    norm_sq = float(grad @ grad)
    if norm_sq < 1e-30:
        return None
    anchor = grad * (level - c0) / norm_sq
    direction = np.array([-gy, gx]) / np.sqrt(norm_sq)
    return LineString([anchor - reach * direction, anchor + reach * direction])


def split_triangle_at_levels(coords, coeffs, levels):
    """Cut one triangle along affine level sets; returns shapely polygons."""
    pieces = [Polygon(np.asarray(coords, dtype=float))]
    for level in levels:
        line = _level_line(coeffs, level)
        if line is None:
            continue
        next_pieces = []
        for piece in pieces:
            try:
                parts = shapely_split(piece, line)
                next_pieces.extend([g for g in parts.geoms if g.area > 1e-300])
            except Exception:
                next_pieces.append(piece)
        pieces = next_pieces
    return pieces


def integrate_kinked(coords, integrand, coeffs, levels, k=8):
    """Dense-quadrature integral over a triangle with straight kink lines."""
    total = 0.0
    for piece in split_triangle_at_levels(coords, coeffs, levels):
        ring = np.asarray(piece.exterior.coords)[:-1]
        for idx in range(1, len(ring) - 1):
            sub = np.array([ring[0], ring[idx], ring[idx + 1]])
            total += integrate_smooth(sub, integrand, k)
    return total


def oracle_clamped_load(p_fe, alpha, lower, upper, k=8):
    """Brute-force load vector: integral of clamp(-p/alpha, ...) * hat_i."""
    mesh = p_fe.mesh
    out = np.zeros(mesh.num_vertices)
    levels = [lv for lv in (lower, upper) if np.isfinite(lv)]
    for tri, coords in zip(mesh.triangles, mesh.triangle_coords()):
        w_nodal = -p_fe.values[tri] / alpha
        w_coeffs = _affine_from_nodal(coords, w_nodal)
        for local in range(3):
            hat = np.zeros(3)
            hat[local] = 1.0
            hat_coeffs = _affine_from_nodal(coords, hat)

            def integrand(x, wc=w_coeffs, hc=hat_coeffs):
                w = wc[0] + x[:, 0] * wc[1] + x[:, 1] * wc[2]
                lam = hc[0] + x[:, 0] * hc[1] + x[:, 1] * hc[2]
                return np.clip(w, lower, upper) * lam

            out[tri[local]] += integrate_kinked(coords, integrand, w_coeffs, levels, k)
    return out


def oracle_clamped_sq_norm(p_fe, alpha, lower, upper, k=8):
    """Brute-force integral of clamp(-p/alpha, ...)^2."""
    mesh = p_fe.mesh
    levels = [lv for lv in (lower, upper) if np.isfinite(lv)]
    total = 0.0
    for tri, coords in zip(mesh.triangles, mesh.triangle_coords()):
        w_nodal = -p_fe.values[tri] / alpha
        w_coeffs = _affine_from_nodal(coords, w_nodal)

        def integrand(x, wc=w_coeffs):
            w = wc[0] + x[:, 0] * wc[1] + x[:, 1] * wc[2]
            return np.clip(w, lower, upper) ** 2

        total += integrate_kinked(coords, integrand, w_coeffs, levels, k)
    return total


def oracle_lq_norm(v_fe, q, k=8):
    """Brute-force L^q norm of a piecewise-linear function."""
    mesh = v_fe.mesh
    total = 0.0
    for tri, coords in zip(mesh.triangles, mesh.triangle_coords()):
        coeffs = _affine_from_nodal(coords, v_fe.values[tri])
        levels = [0.0] if q % 2 == 1 else []

        def integrand(x, vc=coeffs):
            vals = vc[0] + x[:, 0] * vc[1] + x[:, 1] * vc[2]
            return np.abs(vals) ** q

        total += integrate_kinked(coords, integrand, coeffs, levels, k)
    return total ** (1.0 / q)


def random_fe_function(mesh, rng, scale=1.0, zero_trace=False):
    from certopt import FeFunction

    values = rng.normal(scale=scale, size=mesh.num_vertices)
    if zero_trace:
        values[mesh.boundary_mask] = 0.0
    return FeFunction(mesh=mesh, values=values, zero_trace=zero_trace)


@pytest.fixture(scope="session")
def mesh4():
    from certopt import build_uniform_mesh

    return build_uniform_mesh(4)


@pytest.fixture(scope="session")
def mesh8():
    from certopt import build_uniform_mesh

    return build_uniform_mesh(8)
