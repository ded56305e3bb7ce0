"""Robust point-in-mesh tests via winding numbers.

The winding number of a closed oriented surface around a query point is
accumulated triangle by triangle with sign chains on lexicographic vertex
comparisons, so grid-degenerate configurations (rays through vertices,
edges, or coplanar faces) resolve consistently instead of by luck.  Points
lying exactly on the surface are reported separately.
"""

from __future__ import annotations

import numpy as np

_PAIR_BUDGET = 500_000  # point x triangle cells per chunk, bounds peak memory


def _first_nonzero_sign(*terms: np.ndarray) -> np.ndarray:
    """Sign of the first nonzero term, elementwise; 0 if all vanish."""
    out = np.sign(terms[0])
    for term in terms[1:]:
        mask = out == 0
        if not mask.any():
            break
        out = np.where(mask, np.sign(term), out)
    return out


def winding_numbers(points: np.ndarray, vertices: np.ndarray,
                    triangles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Winding number of the surface around each point.

    Returns (winding, on_surface).  Winding is 1 for points strictly inside
    a simple outward-oriented surface and 0 outside; it is undefined (left
    at 0) where on_surface is True.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    n = len(points)
    winding = np.zeros(n, dtype=np.int64)
    on_surface = np.zeros(n, dtype=bool)
    if len(triangles) == 0 or n == 0:
        return winding, on_surface

    tri_pts = vertices[triangles]            # (T, 3, 3)
    chunk = max(1, _PAIR_BUDGET // len(triangles))
    for start in range(0, n, chunk):
        o = points[start:start + chunk]
        w, on = _winding_chunk(o, tri_pts)
        winding[start:start + chunk] = w
        on_surface[start:start + chunk] = on
    winding[on_surface] = 0
    return winding, on_surface


def _vertex_signs(d: np.ndarray) -> np.ndarray:
    return _first_nonzero_sign(d[..., 0], d[..., 1], d[..., 2])


def _edge_signs(dp: np.ndarray, dq: np.ndarray) -> np.ndarray:
    e1 = dp[..., 1] * dq[..., 0] - dp[..., 0] * dq[..., 1]
    e2 = dp[..., 2] * dq[..., 0] - dp[..., 0] * dq[..., 2]
    e3 = dp[..., 2] * dq[..., 1] - dp[..., 1] * dq[..., 2]
    return _first_nonzero_sign(e1, e2, e3)


def _winding_chunk(o: np.ndarray, tri_pts: np.ndarray):
    # displaced triangle corners, shape (C, T, 3)
    dp = tri_pts[None, :, 0, :] - o[:, None, :]
    dq = tri_pts[None, :, 1, :] - o[:, None, :]
    dr = tri_pts[None, :, 2, :] - o[:, None, :]

    sp = _vertex_signs(dp)
    sq = _vertex_signs(dq)
    sr = _vertex_signs(dr)
    on = (sp == 0) | (sq == 0) | (sr == 0)   # point coincides with a corner

    epq = _edge_signs(dp, dq)
    eqr = _edge_signs(dq, dr)
    erp = _edge_signs(dr, dp)
    # an edge whose endpoints straddle the point but whose sign chain
    # vanishes passes through the point
    on |= (sp != sq) & (epq == 0)
    on |= (sq != sr) & (eqr == 0)
    on |= (sr != sp) & (erp == 0)

    boundary = (np.where(sp != sq, epq, 0)
                + np.where(sq != sr, eqr, 0)
                + np.where(sr != sp, erp, 0))

    det = np.einsum("...i,...i->...", dp, np.cross(dq, dr))
    tri_sign = np.sign(det)
    on |= (boundary != 0) & (tri_sign == 0)  # face passes through the point

    contrib = np.where((boundary != 0) & ~on, tri_sign, 0.0)
    point_on = on.any(axis=1)
    winding = np.rint(contrib.sum(axis=1) / 2.0).astype(np.int64)
    return winding, point_on


def points_inside_mesh(points: np.ndarray, mesh) -> tuple[np.ndarray, np.ndarray]:
    """Strict-interior and on-surface masks for `points` against a mesh."""
    winding, on = winding_numbers(points, mesh.vertices, mesh.triangles)
    return winding != 0, on
