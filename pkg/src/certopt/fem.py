"""P1 finite-element calculus on the uniform unit-square mesh.

Provides stiffness/mass assembly, the lumped nodal quadrature weights, the
lumped q-norm (sum_j m_j |v_j|^q)^(1/q), exact L^q norms of piecewise-linear
functions, quadrature of smooth data, and exact integration of clamped
(box-projected) piecewise-linear controls.

The clamped integrals are computed without quadrature error: on each
triangle the argument of the clamp is affine, so the two clamp thresholds
cut the triangle into at most three bands bounded by parallel lines.  Each
band is split into sub-triangles on which the integrand is a polynomial of
degree <= 2 and is integrated exactly.  The same splitting along the zero
level set makes odd-power L^q norms exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, evaluate_field

__all__ = [
    "FeFunction",
    "local_stiffness",
    "local_mass",
    "assemble_stiffness",
    "assemble_mass",
    "lumped_mass",
    "lumped_q_norm",
    "exact_lq_norm",
    "smooth_l2_product",
    "clamped_control_load",
    "clamped_control_sq_norm",
    "band_mass_matrix",
]

EXACT_NORM_EXPONENTS = (2, 3, 4, 5, 6)

# relative area below which degenerate clipped pieces are dropped
_AREA_TOL = 1e-14


@dataclass(frozen=True)
class FeFunction:
    """Continuous piecewise-linear function given by its nodal coefficients.

    ``zero_trace`` marks membership in the subspace with homogeneous Dirichlet
    values; it is validated on construction.
    """

    mesh: Mesh
    values: np.ndarray
    zero_trace: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.mesh.num_vertices,):
            raise ValueError(
                f"coefficient vector has length {values.size}, "
                f"mesh has {self.mesh.num_vertices} vertices")
        if self.zero_trace and np.any(values[self.mesh.boundary_mask] != 0.0):
            raise ValueError("zero_trace function has nonzero boundary values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


# ---------------------------------------------------------------------------
# assembly

def local_stiffness(coords) -> np.ndarray:
    """Element stiffness matrix of a single triangle (gradients of hats)."""
    coords = np.asarray(coords, dtype=float)
    x, y = coords[:, 0], coords[:, 1]
    b = np.array([y[1] - y[2], y[2] - y[0], y[0] - y[1]])
    c = np.array([x[2] - x[1], x[0] - x[2], x[1] - x[0]])
    area = 0.5 * abs((x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0]))
    return (np.outer(b, b) + np.outer(c, c)) / (4.0 * area)


def local_mass(coords) -> np.ndarray:
    """Element mass matrix (|T|/12) [[2,1,1],[1,2,1],[1,1,2]]."""
    coords = np.asarray(coords, dtype=float)
    x, y = coords[:, 0], coords[:, 1]
    area = 0.5 * abs((x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0]))
    return (area / 12.0) * (np.ones((3, 3)) + np.eye(3))


def _element_geometry(mesh: Mesh):
    coords = mesh.triangle_coords()
    x, y = coords[..., 0], coords[..., 1]
    bb = y[:, [1, 2, 0]] - y[:, [2, 0, 1]]
    cc = x[:, [2, 0, 1]] - x[:, [1, 2, 0]]
    areas = 0.5 * np.abs((x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0])
                         - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0]))
    return bb, cc, areas


def _scatter(mesh: Mesh, local: np.ndarray) -> sp.csr_matrix:
    tris = mesh.triangles
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)),
                        shape=(mesh.num_vertices, mesh.num_vertices))
    out = mat.tocsr()
    out.sum_duplicates()
    return out


def assemble_stiffness(mesh: Mesh) -> sp.csr_matrix:
    """Global stiffness matrix; symmetric, kernel = constants before BCs."""
    bb, cc, areas = _element_geometry(mesh)
    local = (bb[:, :, None] * bb[:, None, :] + cc[:, :, None] * cc[:, None, :])
    local /= (4.0 * areas)[:, None, None]
    return _scatter(mesh, local)


def assemble_mass(mesh: Mesh) -> sp.csr_matrix:
    """Global mass matrix; symmetric positive definite, entries sum to 1."""
    _, _, areas = _element_geometry(mesh)
    base = np.ones((3, 3)) + np.eye(3)
    local = (areas / 12.0)[:, None, None] * base[None, :, :]
    return _scatter(mesh, local)


def lumped_mass(mesh: Mesh) -> np.ndarray:
    """Nodal quadrature weights m_j = sum over incident triangles of |T|/3.

    These weights realize the interpolated integral: for any nodal data g,
    integral of I_h[g] = sum_j m_j g_j.
    """
    _, _, areas = _element_geometry(mesh)
    weights = np.zeros(mesh.num_vertices)
    np.add.at(weights, mesh.triangles.ravel(), np.repeat(areas / 3.0, 3))
    return weights


# ---------------------------------------------------------------------------
# norms

def lumped_q_norm(v: FeFunction, q: float) -> float:
    """Mass-lumped q-norm (sum_j m_j |v_j|^q)^(1/q)."""
    if q < 1:
        raise ValueError(f"norm exponent q must satisfy q >= 1, got {q}")
    m = lumped_mass(v.mesh)
    return float(np.sum(m * np.abs(v.values) ** q) ** (1.0 / q))


def _homogeneous_power_sum(w: np.ndarray, q: int) -> np.ndarray:
    """sum over i+j+k=q of w0^i w1^j w2^k, vectorized over triangles.

    Equals the exact triangle integral of (linear)^q up to the factor
    2|T| / ((q+1)(q+2)).
    """
    w0, w1, w2 = w[..., 0], w[..., 1], w[..., 2]
    total = np.zeros_like(w0)
    for i in range(q + 1):
        for j in range(q + 1 - i):
            total += w0**i * w1**j * w2 ** (q - i - j)
    return total


def _tri_power_integral(w: np.ndarray, areas, q: int) -> np.ndarray:
    """Exact integral of (linear with nodal values w)^q per triangle."""
    return areas * (2.0 / ((q + 1) * (q + 2))) * _homogeneous_power_sum(w, q)


# clipping machinery: polygons carried as [(barycentric 3-tuple, value), ...]

_TRI_POLY_TEMPLATE = (((1.0, 0.0, 0.0),), ((0.0, 1.0, 0.0),), ((0.0, 0.0, 1.0),))


def _clip_poly(poly, threshold, keep_ge):
    """Clip a convex polygon against {value >= threshold} (or <=)."""
    out = []
    m = len(poly)
    for k in range(m):
        lam_a, val_a = poly[k]
        lam_b, val_b = poly[(k + 1) % m]
        in_a = (val_a >= threshold) if keep_ge else (val_a <= threshold)
        in_b = (val_b >= threshold) if keep_ge else (val_b <= threshold)
        if in_a:
            out.append((lam_a, val_a))
        if in_a != in_b:
            t = (threshold - val_a) / (val_b - val_a)
            lam = (lam_a[0] + t * (lam_b[0] - lam_a[0]),
                   lam_a[1] + t * (lam_b[1] - lam_a[1]),
                   lam_a[2] + t * (lam_b[2] - lam_a[2]))
            out.append((lam, threshold))
    return out


def _fan_triangles(poly):
    """Fan-triangulate a convex polygon; yields (corners, values, rel_area).

    rel_area is the sub-triangle area divided by the parent triangle area.
    Degenerate slivers below the relative tolerance are dropped.
    """
    pieces = []
    for k in range(1, len(poly) - 1):
        lam = (poly[0][0], poly[k][0], poly[k + 1][0])
        vals = (poly[0][1], poly[k][1], poly[k + 1][1])
        d11 = lam[1][1] - lam[0][1]
        d12 = lam[1][2] - lam[0][2]
        d21 = lam[2][1] - lam[0][1]
        d22 = lam[2][2] - lam[0][2]
        rel_area = abs(d11 * d22 - d12 * d21)
        if rel_area > _AREA_TOL:
            pieces.append((lam, vals, rel_area))
    return pieces


def _band_pieces(w, lower, upper):
    """Split one triangle into clamp bands; w holds the three nodal values.

    Returns a list of (band, pieces) with band in {'low', 'mid', 'high'} and
    pieces as produced by _fan_triangles.  Infinite thresholds disable the
    corresponding cut.
    """
    base = [((1.0, 0.0, 0.0), w[0]), ((0.0, 1.0, 0.0), w[1]), ((0.0, 0.0, 1.0), w[2])]
    out = []
    mid = base
    if np.isfinite(lower):
        low = _clip_poly(base, lower, keep_ge=False)
        if len(low) >= 3:
            out.append(("low", _fan_triangles(low)))
        mid = _clip_poly(mid, lower, keep_ge=True)
    if np.isfinite(upper):
        high = _clip_poly(base, upper, keep_ge=True)
        if len(high) >= 3:
            out.append(("high", _fan_triangles(high)))
        mid = _clip_poly(mid, upper, keep_ge=False)
    if len(mid) >= 3:
        out.append(("mid", _fan_triangles(mid)))
    return out


def exact_lq_norm(v: FeFunction, q: int) -> float:
    """Exact L^q(Omega) norm of a piecewise-linear function, integer q in 2..6.

    Even powers integrate the degree-q polynomial per triangle in closed form;
    odd powers first split each sign-changing triangle along the zero level
    set (a straight segment) so that |v|^q is polynomial on every piece.
    """
    if isinstance(q, bool) or q not in EXACT_NORM_EXPONENTS:
        raise ValueError(
            f"exact norms support integer exponents {EXACT_NORM_EXPONENTS}, got {q!r}")
    mesh = v.mesh
    w = v.values[mesh.triangles]
    area = mesh.triangle_area

    if q % 2 == 0:
        total = float(np.sum(_tri_power_integral(w, area, q)))
        return max(total, 0.0) ** (1.0 / q)

    wmin = w.min(axis=1)
    wmax = w.max(axis=1)
    single_sign = (wmin >= 0.0) | (wmax <= 0.0)
    total = float(np.sum(np.abs(_tri_power_integral(w[single_sign], area, q))))
    coeff = 2.0 / ((q + 1) * (q + 2))
    for row in w[~single_sign]:
        base = [((1.0, 0.0, 0.0), row[0]),
                ((0.0, 1.0, 0.0), row[1]),
                ((0.0, 0.0, 1.0), row[2])]
        for poly in (_clip_poly(base, 0.0, keep_ge=True),
                     _clip_poly(base, 0.0, keep_ge=False)):
            if len(poly) < 3:
                continue
            for _, vals, rel_area in _fan_triangles(poly):
                hq = sum(vals[0]**i * vals[1]**j * vals[2]**(q - i - j)
                         for i in range(q + 1) for j in range(q + 1 - i))
                total += rel_area * area * coeff * abs(hq)
    return max(total, 0.0) ** (1.0 / q)


# ---------------------------------------------------------------------------
# quadrature of smooth data (fixed symmetric 7-point rule, exact to degree 5)

_S15 = np.sqrt(15.0)
_QA = (6.0 - _S15) / 21.0
_QB = (6.0 + _S15) / 21.0
_QUAD_BARY = np.array(
    [[1 / 3, 1 / 3, 1 / 3],
     [_QA, _QA, 1 - 2 * _QA], [_QA, 1 - 2 * _QA, _QA], [1 - 2 * _QA, _QA, _QA],
     [_QB, _QB, 1 - 2 * _QB], [_QB, 1 - 2 * _QB, _QB], [1 - 2 * _QB, _QB, _QB]])
_QUAD_W = np.array([9 / 40,
                    (155 - _S15) / 1200, (155 - _S15) / 1200, (155 - _S15) / 1200,
                    (155 + _S15) / 1200, (155 + _S15) / 1200, (155 + _S15) / 1200])


def smooth_l2_product(mesh: Mesh, f, v: FeFunction | None = None):
    """Quadrature of smooth data against the finite-element space.

    Without ``v`` returns the load vector with entries integral of f * hat_i.
    With ``v`` returns the scalar integral of (v - f)^2.  Polynomials up to
    degree 5 are integrated exactly; the rule is fixed so results are
    reproducible bit for bit.
    """
    coords = mesh.triangle_coords()
    pts = np.einsum("kl,nlj->nkj", _QUAD_BARY, coords)
    fvals = evaluate_field(f, pts)
    area = mesh.triangle_area

    if v is None:
        contrib = area * np.einsum("k,nk,ki->ni", _QUAD_W, fvals, _QUAD_BARY)
        out = np.zeros(mesh.num_vertices)
        np.add.at(out, mesh.triangles.ravel(), contrib.ravel())
        return out

    if v.mesh is not mesh and v.mesh.n != mesh.n:
        raise ValueError("finite-element function lives on a different mesh")
    vvals = np.einsum("kl,nl->nk", _QUAD_BARY, v.values[mesh.triangles])
    return float(area * np.einsum("k,nk->", _QUAD_W, (vvals - fvals) ** 2))


# ---------------------------------------------------------------------------
# exact integrals of the clamped control clamp(-p/alpha, lower, upper)

def _check_bounds(alpha: float, lower: float, upper: float):
    if not alpha > 0:
        raise ValueError(f"regularization weight alpha must be positive, got {alpha}")
    if not lower <= upper:
        raise ValueError(f"control bounds must satisfy lower <= upper, got ({lower}, {upper})")


def _clamp_classify(w, lower, upper):
    wmin = w.min(axis=1)
    wmax = w.max(axis=1)
    full_low = wmax <= lower if np.isfinite(lower) else np.zeros(len(w), dtype=bool)
    full_high = wmin >= upper if np.isfinite(upper) else np.zeros(len(w), dtype=bool)
    full_mid = (wmin >= lower) & (wmax <= upper)
    mixed = ~(full_low | full_high | full_mid)
    return full_low, full_mid, full_high, mixed


def clamped_control_load(p: FeFunction, alpha: float, lower: float, upper: float) -> np.ndarray:
    """Load vector of the box-projected control: integral of clamp(-p/alpha) * hat_i.

    Exact: on every triangle the projection argument is affine, so the
    integrand is piecewise polynomial of degree <= 2 on the clamp bands.
    With both bounds infinite this reduces to -(1/alpha) * (mass @ p).
    """
    _check_bounds(alpha, lower, upper)
    mesh = p.mesh
    if np.isneginf(lower) and np.isposinf(upper):
        return -(assemble_mass(mesh) @ p.values) / alpha

    tris = mesh.triangles
    w = -p.values[tris] / alpha
    area = mesh.triangle_area
    full_low, full_mid, full_high, mixed = _clamp_classify(w, lower, upper)

    out = np.zeros(mesh.num_vertices)
    if full_mid.any():
        wm = w[full_mid]
        contrib = (area / 12.0) * (wm + wm.sum(axis=1, keepdims=True))
        np.add.at(out, tris[full_mid].ravel(), contrib.ravel())
    if full_low.any():
        np.add.at(out, tris[full_low].ravel(),
                  np.full(3 * int(full_low.sum()), lower * area / 3.0))
    if full_high.any():
        np.add.at(out, tris[full_high].ravel(),
                  np.full(3 * int(full_high.sum()), upper * area / 3.0))

    for tri_idx in np.flatnonzero(mixed):
        verts = tris[tri_idx]
        contrib = [0.0, 0.0, 0.0]
        for band, pieces in _band_pieces(w[tri_idx], lower, upper):
            if band == "low":
                const = lower
            elif band == "high":
                const = upper
            else:
                const = None
            for lam, vals, rel_area in pieces:
                piece_area = rel_area * area
                if const is not None:
                    for i in range(3):
                        contrib[i] += const * piece_area * (
                            lam[0][i] + lam[1][i] + lam[2][i]) / 3.0
                else:
                    # edge-midpoint rule, exact for quadratics
                    for a, b in ((0, 1), (1, 2), (2, 0)):
                        wm = 0.5 * (vals[a] + vals[b])
                        for i in range(3):
                            contrib[i] += (piece_area / 3.0) * wm * 0.5 * (
                                lam[a][i] + lam[b][i])
        for i in range(3):
            out[verts[i]] += contrib[i]
    return out


def clamped_control_sq_norm(p: FeFunction, alpha: float, lower: float, upper: float) -> float:
    """Exact integral of clamp(-p/alpha, lower, upper)^2 over the domain."""
    _check_bounds(alpha, lower, upper)
    mesh = p.mesh
    tris = mesh.triangles
    w = -p.values[tris] / alpha
    area = mesh.triangle_area

    if np.isneginf(lower) and np.isposinf(upper):
        return float(np.sum(_tri_power_integral(w, area, 2)))

    full_low, full_mid, full_high, mixed = _clamp_classify(w, lower, upper)
    total = float(np.sum(_tri_power_integral(w[full_mid], area, 2)))
    total += lower**2 * area * int(full_low.sum()) if full_low.any() else 0.0
    total += upper**2 * area * int(full_high.sum()) if full_high.any() else 0.0

    for tri_idx in np.flatnonzero(mixed):
        for band, pieces in _band_pieces(w[tri_idx], lower, upper):
            const = lower if band == "low" else upper if band == "high" else None
            for lam, vals, rel_area in pieces:
                piece_area = rel_area * area
                if const is not None:
                    total += const**2 * piece_area
                else:
                    for a, b in ((0, 1), (1, 2), (2, 0)):
                        wm = 0.5 * (vals[a] + vals[b])
                        total += (piece_area / 3.0) * wm**2
    return total


def band_mass_matrix(p: FeFunction, alpha: float, lower: float, upper: float) -> sp.csr_matrix:
    """Mass matrix restricted to the region where clamp(-p/alpha) is inactive.

    This is the generalized derivative of the clamped control load with
    respect to p, up to the factor -1/alpha.  With both bounds infinite it
    equals the full mass matrix.
    """
    _check_bounds(alpha, lower, upper)
    mesh = p.mesh
    if np.isneginf(lower) and np.isposinf(upper):
        return assemble_mass(mesh)

    tris = mesh.triangles
    w = -p.values[tris] / alpha
    area = mesh.triangle_area
    _, full_mid, _, mixed = _clamp_classify(w, lower, upper)

    rows, cols, data = [], [], []
    if full_mid.any():
        t = tris[full_mid]
        base = (area / 12.0) * (np.ones((3, 3)) + np.eye(3))
        local = np.broadcast_to(base, (t.shape[0], 3, 3))
        rows.append(np.repeat(t, 3, axis=1).ravel())
        cols.append(np.tile(t, (1, 3)).ravel())
        data.append(local.ravel())

    for tri_idx in np.flatnonzero(mixed):
        verts = tris[tri_idx]
        local = np.zeros((3, 3))
        for band, pieces in _band_pieces(w[tri_idx], lower, upper):
            if band != "mid":
                continue
            for lam, _, rel_area in pieces:
                piece_area = rel_area * area
                for a, b in ((0, 1), (1, 2), (2, 0)):
                    mid = 0.5 * (np.asarray(lam[a]) + np.asarray(lam[b]))
                    local += (piece_area / 3.0) * np.outer(mid, mid)
        rows.append(np.repeat(verts, 3))
        cols.append(np.tile(verts, 3))
        data.append(local.ravel())

    if not rows:
        return sp.csr_matrix((mesh.num_vertices, mesh.num_vertices))
    mat = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.num_vertices, mesh.num_vertices))
    out = mat.tocsr()
    out.sum_duplicates()
    return out
