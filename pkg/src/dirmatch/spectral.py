"""Cotangent Laplace-Beltrami operator and its leading eigenpairs."""

from __future__ import annotations

import hashlib
import logging
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from .errors import ConvergenceFailure, DegenerateGeometry
from .geometry import PointCloud, vertex_areas

logger = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-6


@dataclass(frozen=True)
class LaplacianPair:
    """Stiffness ``W`` (positive semidefinite, rows sum to zero) and lumped areas ``A``.

    Off-diagonal entries are ``-w_ij`` with ``w_ij = (cot a + cot b) / 2``.
    """

    W: sparse.csr_matrix
    A: np.ndarray

    @property
    def n(self):
        return self.W.shape[0]

    @property
    def mass(self):
        return sparse.diags(self.A)


@dataclass(frozen=True)
class SpectralEmbedding:
    """First ``K`` eigenpairs of ``W phi = lambda A phi``.

    ``phi`` is n-by-K with A-orthonormal columns; ``evals`` ascend.
    """

    phi: np.ndarray
    evals: np.ndarray

    @property
    def K(self):
        return self.phi.shape[1]

    @property
    def n(self):
        return self.phi.shape[0]

    def truncated(self, k):
        return SpectralEmbedding(self.phi[:, :k], self.evals[:k])


def _face_cotangents(vertices, faces):
    """Cotangent of the angle at each corner; column c is the corner at faces[:, c]."""
    cots = np.empty(faces.shape, dtype=np.float64)
    for c in range(3):
        p = vertices[faces[:, c]]
        a = vertices[faces[:, (c + 1) % 3]] - p
        b = vertices[faces[:, (c + 2) % 3]] - p
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        bad = np.flatnonzero(cross <= 0)
        if len(bad):
            raise DegenerateGeometry(f"{len(bad)} zero-area faces", bad)
        cots[:, c] = np.einsum("ij,ij->i", a, b) / cross
    return cots


def _cot_weights(vertices, faces):
    """Edge endpoints and half-cotangent weights, one entry per face corner."""
    cots = _face_cotangents(vertices, faces)
    i = np.concatenate([faces[:, 1], faces[:, 2], faces[:, 0]])
    j = np.concatenate([faces[:, 2], faces[:, 0], faces[:, 1]])
    w = 0.5 * np.concatenate([cots[:, 0], cots[:, 1], cots[:, 2]])
    return i, j, w


def _assemble(n, i, j, w):
    off = sparse.coo_matrix((w, (i, j)), shape=(n, n)).tocsr()
    off = off + off.T
    W = sparse.diags(np.asarray(off.sum(axis=1)).ravel()) - off
    W = W.tocsr()
    W.sort_indices()
    return W


def cotan_laplacian(shape):
    """Cotangent stiffness and lumped mass for a mesh or a point cloud.

    Point clouds accumulate the cotangent weights of the edges around each
    point in its own local mesh, symmetrized by averaging both directions.
    """
    if isinstance(shape, PointCloud):
        rows, cols, vals = [], [], []
        for p in range(shape.n):
            lm = shape.local_mesh(p)
            faces = lm.mesh.faces[lm.center_faces]
            i, j, w = _cot_weights(lm.mesh.vertices, faces)
            own = (i == 0) | (j == 0)
            rows.append(lm.index[i[own]])
            cols.append(lm.index[j[own]])
            vals.append(w[own])
        i, j = np.concatenate(rows), np.concatenate(cols)
        # each point sees its own edges once per incident face; halve so the
        # two endpoint views average
        W = _assemble(shape.n, i, j, 0.5 * np.concatenate(vals))
        return LaplacianPair(W, vertex_areas(shape))
    i, j, w = _cot_weights(shape.vertices, shape.faces)
    return LaplacianPair(_assemble(shape.n, i, j, w), vertex_areas(shape))


def _fix_signs(phi):
    """Make the largest-magnitude entry of each column positive (lowest index on ties)."""
    idx = np.argmax(np.abs(phi), axis=0)
    signs = np.sign(phi[idx, np.arange(phi.shape[1])])
    signs[signs == 0] = 1.0
    return phi * signs


def residuals(lap, emb):
    Aphi = lap.A[:, None] * emb.phi
    r = lap.W @ emb.phi - Aphi * emb.evals
    return np.linalg.norm(r, axis=0) / np.linalg.norm(Aphi, axis=0)


def lb_eigs(lap, K, maxiter=None, seed=0):
    """Smallest ``K`` eigenpairs of the generalized problem ``W phi = lambda A phi``.

    Uses ARPACK in shift-invert mode around a small negative shift, with a
    seeded start vector so results are reproducible.
    """
    n = lap.n
    if not 0 < K < n:
        raise ValueError(f"K must be in [1, {n - 1}], got {K}")
    if K > n / 10:
        warnings.warn(f"K={K} exceeds n/10={n / 10:.0f}; high modes are under-resolved", stacklevel=2)
    scale = float(np.mean(lap.W.diagonal() / lap.A))
    sigma = -1e-3 * scale
    v0 = np.random.default_rng(seed).standard_normal(n)
    try:
        evals, phi = eigsh(
            lap.W.tocsc(), k=K, M=lap.mass.tocsc(), sigma=sigma, which="LM",
            v0=v0, maxiter=maxiter, tol=0,
        )
    except ArpackNoConvergence as exc:
        raise ConvergenceFailure(
            f"eigensolver converged on {len(exc.eigenvalues)} of {K} eigenpairs",
            converged=len(exc.eigenvalues),
        ) from None
    order = np.argsort(evals, kind="stable")
    evals, phi = evals[order], phi[:, order]
    # re-orthonormalize against the mass matrix
    gram = phi.T @ (lap.A[:, None] * phi)
    L = np.linalg.cholesky(0.5 * (gram + gram.T))
    phi = np.linalg.solve(L, phi.T).T
    phi = _fix_signs(phi)
    evals = np.where(np.abs(evals) <= 1e-10 * max(abs(evals[-1]), 1e-300), np.maximum(evals, 0.0), evals)
    emb = SpectralEmbedding(phi, evals)
    res = residuals(lap, emb)
    if np.max(res) > RESIDUAL_TOL:
        bad = int(np.sum(res > RESIDUAL_TOL))
        raise ConvergenceFailure(
            f"{bad} of {K} eigenpairs exceed residual {RESIDUAL_TOL:g}", converged=K - bad
        )
    return emb


def shape_hash(shape, K):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(shape.points).tobytes())
    faces = getattr(shape, "faces", None)
    if faces is not None:
        h.update(np.ascontiguousarray(faces).tobytes())
    else:
        h.update(f"k_local={shape.k_local}".encode())
    h.update(f"K={K}".encode())
    return h.hexdigest()[:24]


def save_embedding(emb, path):
    """Binary sidecar with n, K, eigenvalues and row-major phi."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp.npz")
    np.savez(tmp, n=emb.n, K=emb.K, evals=emb.evals, phi=np.ascontiguousarray(emb.phi))
    tmp.replace(path)


def load_embedding(path):
    with np.load(path) as data:
        phi = data["phi"]
        evals = data["evals"]
        if phi.shape != (int(data["n"]), int(data["K"])):
            raise ValueError(f"corrupt embedding sidecar {path}")
    return SpectralEmbedding(phi, evals)


def cached_embedding(shape, K, cache_dir=None):
    """Compute or reload the spectral embedding of ``shape`` (cache keyed by content + K)."""
    if cache_dir is not None:
        cache_dir = Path(cache_dir)
        path = cache_dir / f"emb_{shape_hash(shape, K)}.npz"
        if path.exists():
            logger.info("embedding cache hit %s", path)
            return load_embedding(path)
    emb = lb_eigs(cotan_laplacian(shape), K)
    if cache_dir is not None:
        cache_dir.mkdir(parents=True, exist_ok=True)
        save_embedding(emb, path)
    return emb
