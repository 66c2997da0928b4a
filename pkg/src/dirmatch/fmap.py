"""Orthonormal functional maps from anchor pairs and spectral point-map recovery."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .descriptors import nearest_rows
from .errors import DimensionMismatch, EmptyAnchorSet, RankDeficiencyWarning
from .io import atomic_write_text

WINDOW = 10
WINDOW_THRESHOLD = 0.1
K_MIN = 4


@dataclass(frozen=True)
class FunctionalMap:
    C: np.ndarray

    @property
    def k(self):
        return self.C.shape[0]

    def to_csv(self, path):
        rows = [str(self.k)] + [",".join(repr(float(x)) for x in row) for row in self.C]
        atomic_write_text(path, "\n".join(rows) + "\n")

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            k = int(fh.readline())
            C = np.array([[float(x) for x in line.split(",")] for line in fh if line.strip()])
        if C.shape != (k, k):
            raise ValueError(f"{path}: expected {k}x{k} matrix, got {C.shape}")
        return cls(C)


@dataclass(frozen=True)
class SingularSpectrum:
    sigma: np.ndarray
    U: np.ndarray
    V: np.ndarray


def _svd(A):
    """SVD with the largest-magnitude entry of each left singular vector positive."""
    U, s, Vt = np.linalg.svd(A)
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs, s, (Vt.T * signs)


def anchor_correlation(emb1, emb2, anchors, K):
    """``Phi1[src, :K].T @ Phi2[dst, :K]`` over the anchor pairs."""
    if anchors.m == 0:
        raise EmptyAnchorSet("no anchor pairs")
    if K > min(emb1.K, emb2.K):
        raise DimensionMismatch(f"K={K} exceeds embedding sizes {emb1.K}, {emb2.K}")
    return emb1.phi[anchors.src, :K].T @ emb2.phi[anchors.dst, :K]


def singular_spectrum(M):
    U, s, V = _svd(M)
    return SingularSpectrum(s, U, V)


def select_dimension(spectrum, m, K, window=WINDOW, threshold=WINDOW_THRESHOLD, k_min=K_MIN):
    """Spectral dimension supported by the anchors.

    Singular values are normalized by the mean of the ``window`` largest.
    The cut sits just before the first run of ``window`` consecutive
    normalized values summing below ``threshold``; runs truncated by the
    end of the spectrum use a proportionally smaller threshold. The result
    is clamped to ``[k_min, min(m, K)]``, the upper bound winning.
    """
    sigma = np.asarray(spectrum.sigma if hasattr(spectrum, "sigma") else spectrum, dtype=np.float64)[:K]
    upper = min(m, K)
    mu = sigma[: min(window, len(sigma))].mean()
    k = upper
    if mu > 0:
        s = sigma / mu
        csum = np.concatenate([[0.0], np.cumsum(s)])
        for i in range(len(s)):
            stop = min(i + window, len(s))
            if csum[stop] - csum[i] < threshold * (stop - i) / window:
                k = i
                break
    return int(min(max(k, k_min), upper))


def orthonormal_projection(A):
    """Nearest orthonormal matrix ``U @ V.T``."""
    U, s, V = _svd(A)
    if s[0] == 0 or s[-1] / s[0] < 1e-10:
        warnings.warn("correlation matrix is rank deficient", RankDeficiencyWarning, stacklevel=3)
    return U @ V.T


def procrustes(emb1, emb2, anchors, k):
    """Orthonormal ``C`` minimizing ``sum ||Phi1(x) C - Phi2(T x)||^2`` over anchors."""
    return FunctionalMap(orthonormal_projection(anchor_correlation(emb1, emb2, anchors, k)))


def least_squares_fmap(emb1, emb2, anchors, k):
    """Unconstrained least-squares functional map, for comparison only."""
    if anchors.m == 0:
        raise EmptyAnchorSet("no anchor pairs")
    C, *_ = np.linalg.lstsq(emb1.phi[anchors.src, :k], emb2.phi[anchors.dst, :k], rcond=None)
    return FunctionalMap(C)


def recover_map(emb1, emb2, fmap):
    """Nearest neighbor of each ``Phi1(p) C`` among the rows of ``Phi2``."""
    k = fmap.k
    if k > min(emb1.K, emb2.K):
        raise DimensionMismatch(f"functional map size {k} exceeds embedding sizes")
    return nearest_rows(emb1.phi[:, :k] @ fmap.C, emb2.phi[:, :k])
