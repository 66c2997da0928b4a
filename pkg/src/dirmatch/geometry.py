"""Shape containers, connectivity, vertex areas and local meshes for point clouds."""

from __future__ import annotations

from collections import deque
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.spatial import Delaunay, cKDTree

from .errors import DegenerateGeometry, DegenerateNeighborhood, IndexOutOfRange


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def _edge_graph(n, i, j, points):
    """Symmetric CSR matrix of Euclidean edge lengths for the edge list (i, j)."""
    lo = np.minimum(i, j)
    hi = np.maximum(i, j)
    key = np.unique(lo.astype(np.int64) * n + hi)
    lo, hi = key // n, key % n
    length = np.linalg.norm(points[lo] - points[hi], axis=1)
    g = sparse.coo_matrix((length, (lo, hi)), shape=(n, n))
    g = (g + g.T).tocsr()
    g.sort_indices()
    return g


def face_areas(vertices, faces):
    e1 = vertices[faces[:, 1]] - vertices[faces[:, 0]]
    e2 = vertices[faces[:, 2]] - vertices[faces[:, 0]]
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


class TriangleMesh:
    """Triangle mesh with 0-based faces.

    Parameters
    ----------
    vertices : array_like, shape (n, 3)
    faces : array_like, shape (f, 3)
        Vertex indices, counterclockwise.
    isolated : {"reject", "prune"}
        What to do with vertices not referenced by any face. Pruning
        renumbers the remaining vertices in their original order; the
        kept original indices are stored in ``kept``.
    """

    def __init__(self, vertices, faces, isolated="reject"):
        v = np.asarray(vertices, dtype=np.float64)
        f = np.asarray(faces)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must have shape (n, 3), got {v.shape}")
        if f.size == 0:
            f = np.zeros((0, 3), dtype=np.int64)
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError(f"faces must have shape (f, 3), got {f.shape}")
        f = f.astype(np.int64)
        n = len(v)
        if f.size and (f.min() < 0 or f.max() >= n):
            raise IndexOutOfRange(f"face index out of range [0, {n})")
        bad = np.flatnonzero(
            (f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])
        )
        if len(bad):
            raise DegenerateGeometry(f"{len(bad)} faces repeat a vertex", bad)

        used = np.zeros(n, dtype=bool)
        used[f.ravel()] = True
        kept = np.arange(n)
        if not used.all():
            if isolated == "prune":
                kept = np.flatnonzero(used)
                remap = np.full(n, -1, dtype=np.int64)
                remap[kept] = np.arange(len(kept))
                v = v[kept]
                f = remap[f]
            else:
                missing = np.flatnonzero(~used)
                raise DegenerateGeometry(
                    f"{len(missing)} vertices are not referenced by any face", missing
                )
        self.vertices = _frozen(v, np.float64)
        self.faces = _frozen(f, np.int64)
        self.kept = _frozen(kept, np.int64)

    def __repr__(self):
        return f"TriangleMesh(n={self.n}, f={len(self.faces)})"

    @property
    def n(self):
        return len(self.vertices)

    @property
    def points(self):
        return self.vertices

    @cached_property
    def face_areas(self):
        return face_areas(self.vertices, self.faces)

    @cached_property
    def graph(self):
        """Sparse symmetric matrix of edge lengths (the mesh edge graph)."""
        f = self.faces
        i = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
        j = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
        return _edge_graph(self.n, i, j, self.vertices)

    @cached_property
    def edges(self):
        """Unique undirected edges as an (e, 2) array with ``i < j``."""
        g = sparse.triu(self.graph, k=1).tocoo()
        order = np.lexsort((g.col, g.row))
        return np.stack([g.row[order], g.col[order]], axis=1)

    @cached_property
    def one_rings(self):
        g = self.graph
        return [g.indices[g.indptr[i]:g.indptr[i + 1]] for i in range(self.n)]

    @cached_property
    def boundary_vertices(self):
        f = self.faces
        e = np.sort(np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]]), axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return np.unique(uniq[counts == 1].ravel())

    def transformed(self, rotation=None, translation=None, scale=1.0):
        """Copy with ``scale * v @ R.T + t`` applied to the vertices."""
        v = self.vertices * scale
        if rotation is not None:
            v = v @ np.asarray(rotation).T
        if translation is not None:
            v = v + np.asarray(translation)
        return TriangleMesh(v, self.faces)


class LocalMesh:
    """Triangulated neighborhood of one point of a cloud.

    ``mesh`` has local vertex 0 equal to the center point; ``index`` maps local
    vertices back to cloud indices; ``planar`` holds the tangent-plane
    coordinates used for the triangulation.
    """

    def __init__(self, mesh, index, planar):
        self.mesh = mesh
        self.index = index
        self.planar = planar

    @property
    def center_faces(self):
        return np.flatnonzero((self.mesh.faces == 0).any(axis=1))

    @property
    def center_is_interior(self):
        return 0 not in set(self.mesh.boundary_vertices.tolist())


class PointCloud:
    """Raw point set; connectivity comes from per-point local meshes."""

    def __init__(self, points, k_local=10):
        p = np.asarray(points, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != 3:
            raise ValueError(f"points must have shape (n, 3), got {p.shape}")
        if k_local < 6:
            raise ValueError("k_local must be at least 6")
        if len(p) < k_local + 1:
            raise ValueError(f"need at least k_local + 1 = {k_local + 1} points")
        self.points = _frozen(p, np.float64)
        self.k_local = int(k_local)
        self._local = {}

    def __repr__(self):
        return f"PointCloud(n={self.n}, k_local={self.k_local})"

    @property
    def n(self):
        return len(self.points)

    @cached_property
    def tree(self):
        return cKDTree(self.points)

    def local_mesh(self, i):
        if i not in self._local:
            self._local[i] = build_local_mesh(self, i, self.k_local)
        return self._local[i]

    @cached_property
    def graph(self):
        """Edge-length graph from the union of each point's local one-ring."""
        rows, cols = [], []
        for i in range(self.n):
            lm = self.local_mesh(i)
            nb = np.unique(lm.mesh.faces[lm.center_faces].ravel())
            nb = nb[nb != 0]
            rows.append(np.full(len(nb), i))
            cols.append(lm.index[nb])
        return _edge_graph(self.n, np.concatenate(rows), np.concatenate(cols), self.points)


def vertex_areas(shape):
    """Lumped (one-third barycentric) vertex areas.

    For a ``PointCloud`` each point receives one third of the area of the
    faces incident to it in its own local mesh.
    """
    if isinstance(shape, PointCloud):
        areas = np.empty(shape.n)
        for i in range(shape.n):
            lm = shape.local_mesh(i)
            areas[i] = lm.mesh.face_areas[lm.center_faces].sum() / 3.0
        if np.any(areas <= 0):
            raise DegenerateGeometry("point with zero local area", np.flatnonzero(areas <= 0))
        return areas
    fa = shape.face_areas
    bad = np.flatnonzero(fa <= 0)
    if len(bad):
        raise DegenerateGeometry(f"{len(bad)} zero-area faces", bad)
    return np.bincount(shape.faces.ravel(), weights=np.repeat(fa / 3.0, 3), minlength=shape.n)


def ring_neighborhood(shape, i, depth):
    """Vertices within ``depth`` edges of ``i`` (excluding ``i``), sorted."""
    n = shape.n
    if not 0 <= i < n:
        raise IndexOutOfRange(f"vertex {i} not in [0, {n})")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    g = shape.graph
    hops = {i: 0}
    queue = deque([i])
    while queue:
        u = queue.popleft()
        if hops[u] == depth:
            continue
        for w in g.indices[g.indptr[u]:g.indptr[u + 1]]:
            w = int(w)
            if w not in hops:
                hops[w] = hops[u] + 1
                queue.append(w)
    del hops[i]
    return np.array(sorted(hops), dtype=np.int64)


def ring_neighborhoods(shape, depth):
    """All ring neighborhoods at once, as a CSR boolean matrix (row i = ring of i)."""
    g = shape.graph
    adj = sparse.csr_matrix((np.ones(g.nnz, dtype=np.int32), g.indices, g.indptr), shape=g.shape)
    reach = adj.copy()
    for _ in range(depth - 1):
        reach = reach + reach @ adj
    reach = (reach - sparse.diags(reach.diagonal())).tocsr()
    reach.eliminate_zeros()
    reach.data[:] = 1
    reach.sort_indices()
    return reach


def build_local_mesh(cloud, i, k_local):
    """Triangulate the ``k_local`` nearest neighbors of point ``i``.

    The neighborhood is projected onto its tangent plane (centroid plus the
    two leading principal directions) and triangulated with 2D Delaunay.
    Vertices keep their 3D coordinates.
    """
    if k_local < 6:
        raise ValueError("k_local must be at least 6")
    if cloud.n < k_local + 1:
        raise ValueError(f"cloud has {cloud.n} points, need {k_local + 1}")
    dist, idx = cloud.tree.query(cloud.points[i], k=k_local + 1)
    idx = np.asarray(idx, dtype=np.int64)
    # keep i first even when another point ties at distance 0
    idx = np.concatenate([[i], idx[idx != i][:k_local]])
    pts = cloud.points[idx]
    scale = np.max(np.linalg.norm(pts - pts[0], axis=1))
    if scale == 0 or np.min(dist[1:]) <= 1e-12 * scale:
        raise DegenerateNeighborhood(f"coincident points in neighborhood of {i}")
    centered = pts - pts.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s[1] <= 1e-9 * s[0]:
        raise DegenerateNeighborhood(f"collinear neighborhood around {i}")
    planar = centered @ vt[:2].T
    try:
        tri = Delaunay(planar)
    except Exception as exc:  # qhull raises its own error type
        raise DegenerateNeighborhood(f"cannot triangulate neighborhood of {i}: {exc}") from None
    faces = tri.simplices.astype(np.int64)
    # counterclockwise in the plane
    a, b, c = planar[faces[:, 0]], planar[faces[:, 1]], planar[faces[:, 2]]
    cross = (b - a)[:, 0] * (c - a)[:, 1] - (b - a)[:, 1] * (c - a)[:, 0]
    faces[cross < 0] = faces[cross < 0][:, [0, 2, 1]]
    keep = face_areas(pts, faces) > 1e-14 * scale * scale
    mesh = TriangleMesh(pts, faces[keep], isolated="prune")
    if mesh.n != len(idx) or not (mesh.faces == 0).any():
        raise DegenerateNeighborhood(f"degenerate triangulation around {i}")
    return LocalMesh(mesh, idx, planar)


def submesh(mesh, vertex_ids):
    """Induced submesh on ``vertex_ids``; returns (mesh, original indices)."""
    keep = np.zeros(mesh.n, dtype=bool)
    keep[np.asarray(vertex_ids)] = True
    faces = mesh.faces[keep[mesh.faces].all(axis=1)]
    used = np.unique(faces.ravel())
    remap = np.full(mesh.n, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    return TriangleMesh(mesh.vertices[used], remap[faces]), used
