"""Procedural test shapes: icospheres, asymmetric blobs, planar grids, patches."""

import numpy as np
from scipy.spatial.transform import Rotation

from .geometry import TriangleMesh, submesh


def _icosahedron():
    t = (1.0 + 5 ** 0.5) / 2.0
    v = np.array([
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ], dtype=np.float64)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    return v / np.linalg.norm(v, axis=1, keepdims=True), f


def icosphere(subdivisions=4, radius=1.0):
    """Unit icosphere by repeated midpoint subdivision (10 * 4**s + 2 vertices)."""
    v, f = _icosahedron()
    verts = list(v)
    for _ in range(subdivisions):
        cache = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in cache:
                p = verts[a] + verts[b]
                verts.append(p / np.linalg.norm(p))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in f:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        f = np.array(new, dtype=np.int64)
    return TriangleMesh(np.array(verts) * radius, f)


def geodesic_sphere(frequency):
    """Unit sphere from an icosahedron split ``frequency`` times per edge.

    Gives ``10 * frequency**2 + 2`` vertices, so sizes between the powers of
    four of :func:`icosphere` are reachable.
    """
    v0, f0 = _icosahedron()
    nu = int(frequency)
    index = {}
    verts, faces = [], []

    def vid(p):
        q = p / np.linalg.norm(p)
        key = tuple(np.round(q, 9))
        if key not in index:
            index[key] = len(verts)
            verts.append(q)
        return index[key]

    for a, b, c in f0:
        A, B, C = v0[a], v0[b], v0[c]
        grid = {}
        for i in range(nu + 1):
            for j in range(nu + 1 - i):
                grid[i, j] = vid(A + (B - A) * i / nu + (C - A) * j / nu)
        for i in range(nu):
            for j in range(nu - i):
                faces.append([grid[i, j], grid[i + 1, j], grid[i, j + 1]])
                if i + j < nu - 1:
                    faces.append([grid[i + 1, j], grid[i + 1, j + 1], grid[i, j + 1]])
    return TriangleMesh(np.array(verts), np.array(faces, dtype=np.int64))


BLOB_BUMPS = (
    # (direction, amplitude, width)
    ((1.0, 0.2, 0.1), 0.35, 0.45),
    ((-0.3, 1.0, 0.2), 0.22, 0.35),
    ((0.1, -0.4, 1.0), -0.15, 0.5),
    ((-0.8, -0.6, -0.3), 0.28, 0.3),
    ((0.4, 0.5, -0.9), 0.12, 0.25),
)


def blob(frequency=24, bumps=BLOB_BUMPS, stretch=(1.25, 1.0, 0.85)):
    """Asymmetric bumpy closed surface with no nontrivial symmetry.

    ``frequency=24`` gives 5762 vertices.
    """
    sphere = geodesic_sphere(frequency)
    u = np.asarray(sphere.vertices)
    r = np.ones(len(u))
    for d, amp, width in bumps:
        d = np.asarray(d) / np.linalg.norm(d)
        r += amp * np.exp(-np.sum((u - d) ** 2, axis=1) / width ** 2)
    v = u * r[:, None] * np.asarray(stretch)
    return TriangleMesh(v, sphere.faces)


def grid(nx, ny, spacing=1.0, diagonal="alternate"):
    """Planar (nx by ny vertices) triangulated grid in the z = 0 plane."""
    xs, ys = np.meshgrid(np.arange(nx) * spacing, np.arange(ny) * spacing, indexing="xy")
    v = np.stack([xs.ravel(), ys.ravel(), np.zeros(nx * ny)], axis=1)
    faces = []
    for r in range(ny - 1):
        for c in range(nx - 1):
            a = r * nx + c
            b, d, e = a + 1, a + nx, a + nx + 1
            if diagonal == "alternate" and (r + c) % 2:
                faces += [[a, b, d], [b, e, d]]
            else:
                faces += [[a, b, e], [a, e, d]]
    return TriangleMesh(v, np.array(faces, dtype=np.int64))


def random_rotation(seed):
    return Rotation.random(random_state=seed).as_matrix()


def rigid_copy(mesh, seed=0, translation=(0.3, -1.2, 2.5)):
    """Randomly rotated and translated copy with identical vertex order."""
    return mesh.transformed(rotation=random_rotation(seed), translation=translation)


def geodesic_patch(mesh, center, fraction, distances=None):
    """Connected patch of roughly ``fraction`` of the vertices nearest ``center``.

    Returns (patch mesh, original vertex indices).
    """
    from .geodesics import multi_source_distances

    d = distances if distances is not None else multi_source_distances(mesh, [center]).distances
    order = np.argsort(d, kind="stable")
    take = order[: int(np.ceil(fraction * mesh.n))]
    return submesh(mesh, take)
