"""Uniform right-triangle meshes of the unit square.

The mesh is the classical pattern obtained by cutting every cell of an
n-by-n square grid along the bottom-left/top-right diagonal.  All triangles
are congruent right triangles (nonobtuse), the longest edge has length
sqrt(2)/n, and the resulting stiffness matrix has the familiar 5-point
stencil in the interior.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Mesh:
    """Triangulation of [0,1]^2 with (n+1)^2 vertices and 2 n^2 triangles.

    Vertices are ordered row by row (by x2, then x1), so the vertex at grid
    position (i, j) has index j*(n+1) + i and coordinates (i/n, j/n).
    Triangles are stored counterclockwise.  All arrays are read-only.
    """

    n: int
    vertices: np.ndarray       # (num_vertices, 2) float
    triangles: np.ndarray      # (num_triangles, 3) int
    boundary_mask: np.ndarray  # (num_vertices,) bool
    h: float                   # longest edge, sqrt(2)/n

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def num_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def triangle_area(self) -> float:
        # all triangles are congruent halves of grid cells
        return 1.0 / (2.0 * self.n**2)

    def interior_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_mask)

    def triangle_coords(self) -> np.ndarray:
        """Vertex coordinates per triangle, shape (num_triangles, 3, 2)."""
        return self.vertices[self.triangles]

    def reflection_permutation(self) -> np.ndarray:
        """Vertex permutation induced by the point reflection x -> (1-x1, 1-x2).

        The map sends grid position (i, j) to (n-i, n-j); the triangulation is
        invariant under it, so solutions of symmetric problems must be too.
        """
        n = self.n
        idx = np.arange(self.num_vertices)
        i = idx % (n + 1)
        j = idx // (n + 1)
        return (n - j) * (n + 1) + (n - i)


def build_uniform_mesh(n: int) -> Mesh:
    """Build the uniform diagonal-split triangulation with n cells per side."""
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"subdivision count n must be a positive integer, got {n!r}")
    n = int(n)

    side = np.linspace(0.0, 1.0, n + 1)
    x1, x2 = np.meshgrid(side, side, indexing="xy")
    vertices = np.column_stack([x1.ravel(), x2.ravel()])

    def vid(i, j):
        return j * (n + 1) + i

    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    ii = ii.ravel()
    jj = jj.ravel()
    a = vid(ii, jj)
    b = vid(ii + 1, jj)
    c = vid(ii + 1, jj + 1)
    d = vid(ii, jj + 1)
    # both halves keep counterclockwise orientation
    lower = np.column_stack([a, b, c])
    upper = np.column_stack([a, c, d])
    triangles = np.vstack([lower, upper]).astype(np.int64)

    on_edge = (vertices == 0.0) | (vertices == 1.0)
    boundary_mask = on_edge.any(axis=1)

    for arr in (vertices, triangles, boundary_mask):
        arr.setflags(write=False)
    return Mesh(n=n, vertices=vertices, triangles=triangles,
                boundary_mask=boundary_mask, h=np.sqrt(2.0) / n)


def evaluate_field(f, points: np.ndarray) -> np.ndarray:
    """Evaluate a scalar field at an array of points of shape (..., 2).

    Accepts vectorized callables f(points) as well as scalar f(x1, x2) or
    f(point) signatures.
    """
    points = np.asarray(points, dtype=float)
    try:
        vals = np.asarray(f(points), dtype=float)
        if vals.shape == points.shape[:-1]:
            return vals
    except Exception:
        pass
    flat = points.reshape(-1, 2)
    try:
        vals = np.array([float(f(p)) for p in flat])
    except TypeError:
        vals = np.array([float(f(p[0], p[1])) for p in flat])
    return vals.reshape(points.shape[:-1])


def interpolate(f: Callable, mesh: Mesh):
    """Nodal interpolation of a scalar field onto the mesh.

    Returns the piecewise-linear function whose coefficient at every vertex
    equals the field value there; linear fields are reproduced exactly.
    """
    from .fem import FeFunction

    values = evaluate_field(f, mesh.vertices)
    return FeFunction(mesh=mesh, values=values)
