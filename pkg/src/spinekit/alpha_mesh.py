"""Alpha-shape surface reconstruction and mesh metrics.

The alpha complex is computed from the Delaunay tetrahedralization of the
point cloud: a tetrahedron belongs to the complex iff its circumradius is at
most alpha, and the surface is the set of triangular faces incident to
exactly one kept tetrahedron.  Grid-sampled clouds are full of cospherical
and coplanar degeneracies, so the combinatorial side (triangulation,
circumradii, face orientation) runs on a deterministically micro-jittered
copy of the points while all emitted geometry uses the original coordinates.
Exactly-degenerate tetrahedra then behave as infinitely-thin cells: their
jittered circumradius is huge and they only enter the complex in the
convex-hull regime, which leaves the union solid unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import Delaunay, QhullError

from .errors import MeshContractError, ReconstructionError
from .volume_io import PointCloud

_JITTER_SEED = 0x5EB8A
_JITTER_REL = 1e-6

AUTO = "auto"


@dataclass
class TriangleMesh:
    """Closed, outward-oriented triangle surface in mm."""

    vertices: np.ndarray          # (V, 3) float64
    triangles: np.ndarray         # (T, 3) int, outward-oriented
    source_label: int | None = None
    alpha_used: float = float("nan")
    cavities_discarded: int = 0   # interior boundary components dropped
    n_components: int = 1         # outer boundary components kept

    def __len__(self) -> int:
        return len(self.vertices)

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def edge_use_counts(self) -> np.ndarray:
        """Usage count per undirected edge (closed manifolds are all 2)."""
        _, counts = _undirected_edges(self.triangles)
        return counts

    def is_closed(self) -> bool:
        counts = self.edge_use_counts()
        return len(counts) > 0 and bool(np.all(counts == 2))

    def euler_characteristic(self) -> int:
        edges, _ = _undirected_edges(self.triangles)
        return int(len(self.vertices) - len(edges) + len(self.triangles))


@dataclass(frozen=True)
class MeshMetrics:
    area: float      # mm^2
    volume: float    # mm^3


def _undirected_edges(triangles: np.ndarray):
    edges = np.concatenate([triangles[:, [0, 1]],
                            triangles[:, [1, 2]],
                            triangles[:, [2, 0]]])
    key = np.sort(edges, axis=1)
    uniq, counts = np.unique(key, axis=0, return_counts=True)
    return uniq, counts


def _jittered(points: np.ndarray) -> np.ndarray:
    rng = np.random.default_rng(_JITTER_SEED)
    scale = float(points.max() - points.min()) or 1.0
    return points + rng.uniform(-1.0, 1.0, points.shape) * (_JITTER_REL * scale)


def _circumradii(pts: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Circumradius per tetrahedron; near-singular cells get +inf."""
    a, b, c, d = (pts[tets[:, i]] for i in range(4))
    m = 2.0 * np.stack([b - a, c - a, d - a], axis=1)
    sq = np.einsum("ij,ij->i", pts, pts)
    rhs = np.stack([sq[tets[:, 1]] - sq[tets[:, 0]],
                    sq[tets[:, 2]] - sq[tets[:, 0]],
                    sq[tets[:, 3]] - sq[tets[:, 0]]], axis=1)
    det = np.linalg.det(m)
    scale = np.max(np.abs(m), axis=(1, 2)) + 1e-300
    good = np.abs(det) > 1e-14 * scale ** 3
    radii = np.full(len(tets), np.inf)
    if good.any():
        centers = np.linalg.solve(m[good], rhs[good][..., None])[..., 0]
        radii[good] = np.linalg.norm(centers - a[good], axis=1)
    return radii


def _boundary_faces(jit: np.ndarray, tets: np.ndarray, keep: np.ndarray):
    """Oriented boundary triangles of the union of kept tetrahedra."""
    kt = tets[keep]
    if len(kt) == 0:
        return np.zeros((0, 3), dtype=np.int64)
    faces = kt[:, [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]]].reshape(-1, 3)
    opp = kt.reshape(-1)
    key = np.sort(faces, axis=1)
    order = np.lexsort((key[:, 2], key[:, 1], key[:, 0]))
    sk = key[order]
    differs_prev = np.ones(len(sk), dtype=bool)
    differs_prev[1:] = np.any(sk[1:] != sk[:-1], axis=1)
    differs_next = np.ones(len(sk), dtype=bool)
    differs_next[:-1] = differs_prev[1:]
    sole = order[differs_prev & differs_next]
    tris = faces[sole].copy()
    d = jit[opp[sole]]
    a, b, c = jit[tris[:, 0]], jit[tris[:, 1]], jit[tris[:, 2]]
    # outward = away from the kept tet's fourth vertex (jittered coords are
    # never degenerate, so the sign is reliable)
    flip = np.einsum("ij,ij->i", np.cross(b - a, c - a), d - a) > 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def _signed_volume_per_face(points: np.ndarray, tris: np.ndarray) -> np.ndarray:
    a, b, c = points[tris[:, 0]], points[tris[:, 1]], points[tris[:, 2]]
    return np.einsum("ij,ij->i", a, np.cross(b, c)) / 6.0


def _face_components(tris: np.ndarray) -> np.ndarray:
    """Connected-component id per face, via shared undirected edges."""
    nf = len(tris)
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    face_of = np.tile(np.arange(nf), 3)
    key = np.sort(edges, axis=1)
    order = np.lexsort((key[:, 1], key[:, 0]))
    sk = key[order]
    fo = face_of[order]
    same = np.all(sk[1:] == sk[:-1], axis=1)
    fa, fb = fo[:-1][same], fo[1:][same]
    graph = coo_matrix((np.ones(len(fa)), (fa, fb)), shape=(nf, nf))
    _, comp = connected_components(graph, directed=False)
    return comp


class _AlphaComplex:
    """Delaunay + circumradii, reusable across alpha values."""

    def __init__(self, points: np.ndarray):
        if len(points) < 4:
            raise ReconstructionError(
                f"need at least 4 points, got {len(points)}")
        centered = points - points.mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=1e-9 * (np.abs(centered).max() + 1.0)) < 3:
            raise ReconstructionError(
                "points are coplanar or collinear; no solid can be built")
        self.points = points
        self.jit = _jittered(points)
        try:
            self.delaunay = Delaunay(self.jit)
        except QhullError as exc:
            raise ReconstructionError(f"tetrahedralization failed: {exc}") from exc
        self.tets = self.delaunay.simplices
        self.radii = _circumradii(self.jit, self.tets)
        finite = self.radii[np.isfinite(self.radii)]
        if finite.size == 0:
            raise ReconstructionError("all tetrahedra are degenerate")
        self.candidates = np.unique(finite)
        self._vol_eps = 1e-9 * float(np.linalg.norm(
            points.max(axis=0) - points.min(axis=0))) ** 3 + 1e-12

    def evaluate(self, alpha: float):
        """Boundary at `alpha`, or (None, reason) if it is not a closed
        manifold enclosing every input point."""
        keep = self.radii <= alpha
        used = np.zeros(len(self.points), dtype=bool)
        used[self.tets[keep].ravel()] = True
        if not used.all():
            return None, f"{int((~used).sum())} points left outside the complex"
        tris = _boundary_faces(self.jit, self.tets, keep)
        if len(tris) == 0:
            return None, "empty boundary"
        _, counts = _undirected_edges(tris)
        if not np.all(counts == 2):
            bad = int((counts != 2).sum())
            return None, f"{bad} edges not shared by exactly 2 triangles"
        comp = _face_components(tris)
        vols = np.zeros(comp.max() + 1)
        np.add.at(vols, comp, _signed_volume_per_face(self.points, tris))
        if np.any(np.abs(vols) <= self._vol_eps):
            return None, "degenerate zero-volume boundary component"
        outer = vols > 0
        if not outer.any():
            return None, "no positively oriented boundary component"
        return (tris, comp, vols), None


def build_alpha_shape(points, alpha: float | str = AUTO,
                      source_label: int | None = None) -> TriangleMesh:
    """Reconstruct the closed external surface of a point cloud.

    `alpha` is a radius in mm, or "auto" to pick the smallest critical value
    (binary search over the sorted tetrahedron circumradii) whose boundary is
    a closed manifold enclosing all input points.  Interior boundary
    components (cavities) are discarded and counted on the returned mesh.
    """
    if isinstance(points, PointCloud):
        pts = np.asarray(points.points, dtype=float)
    else:
        pts = np.asarray(points, dtype=float)
    complex_ = _AlphaComplex(pts)

    if alpha == AUTO:
        cand = complex_.candidates
        lo, hi = 0, len(cand) - 1
        result, reason = complex_.evaluate(cand[hi])
        if result is None:
            raise ReconstructionError(
                f"no alpha yields a closed manifold enclosing all points: {reason}")
        while lo < hi:
            mid = (lo + hi) // 2
            mid_result, _ = complex_.evaluate(cand[mid])
            if mid_result is not None:
                hi = mid
                result = mid_result
            else:
                lo = mid + 1
        alpha_used = float(cand[hi])
    else:
        alpha_used = float(alpha)
        if alpha_used <= 0:
            raise ReconstructionError(f"alpha must be positive, got {alpha}")
        result, reason = complex_.evaluate(alpha_used)
        if result is None:
            raise ReconstructionError(
                f"alpha={alpha_used:g} does not yield a closed manifold "
                f"enclosing all points: {reason}")

    tris, comp, vols = result
    outer = np.nonzero(vols > 0)[0]
    cavities = int((vols < 0).sum())
    tris = tris[np.isin(comp, outer)]

    used = np.unique(tris)
    remap = np.zeros(len(pts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriangleMesh(vertices=pts[used].copy(),
                        triangles=remap[tris],
                        source_label=source_label,
                        alpha_used=alpha_used,
                        cavities_discarded=cavities,
                        n_components=len(outer))


def mesh_metrics(mesh: TriangleMesh) -> MeshMetrics:
    """Total surface area and enclosed volume (divergence theorem).

    Raises MeshContractError when the mesh is not closed.
    """
    if len(mesh.triangles) == 0 or not mesh.is_closed():
        raise MeshContractError("mesh is open: some edge is not shared by "
                                "exactly 2 triangles")
    a = mesh.vertices[mesh.triangles[:, 0]]
    b = mesh.vertices[mesh.triangles[:, 1]]
    c = mesh.vertices[mesh.triangles[:, 2]]
    area = float(0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1).sum())
    volume = float(abs(_signed_volume_per_face(mesh.vertices, mesh.triangles).sum()))
    return MeshMetrics(area=area, volume=volume)
