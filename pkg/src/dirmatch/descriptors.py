"""Extrinsic SHOT-style descriptors, geodesic distance signatures and exact NN matching."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionMismatch
from .geodesics import distance_rows

SHOT = "SHOT_LIKE"
GDS = "GDS"

N_AZIMUTH = 8
N_ELEVATION = 2
N_RADIAL = 2
N_COS = 11
SHOT_DIM = N_AZIMUTH * N_ELEVATION * N_RADIAL * N_COS
MIN_NEIGHBORS = 5
GDS_ANCHOR_CAP = 800


@dataclass(frozen=True)
class DescriptorField:
    values: np.ndarray
    kind: str
    radius: float | None = None
    anchors: np.ndarray | None = None
    flagged: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def dim(self):
        return self.values.shape[1]


def default_shot_radius(shape, fraction=0.05):
    """``fraction`` of the bounding-box diagonal, box aligned to the principal axes."""
    p = shape.points - shape.points.mean(axis=0)
    _, _, vt = np.linalg.svd(p, full_matrices=False)
    q = p @ vt.T
    return fraction * float(np.linalg.norm(q.max(axis=0) - q.min(axis=0)))


def _disambiguate(axis, offsets, weights, owner, n):
    """Flip per-point axes so most neighbors lie on the positive side.

    Exact ties fall back to the sign of the weighted projection sum.
    """
    proj = np.einsum("ij,ij->i", offsets, axis[owner])
    votes = np.bincount(owner, weights=np.sign(proj), minlength=n)
    pull = np.bincount(owner, weights=weights * proj, minlength=n)
    flip = (votes < 0) | ((votes == 0) & (pull < 0))
    axis[flip] *= -1.0
    return axis


def _lrf(points, owner, nbr, dist, radius):
    n = len(points)
    offsets = points[nbr] - points[owner]
    w = radius - dist
    cov = np.zeros((n, 3, 3))
    outer = w[:, None, None] * offsets[:, :, None] * offsets[:, None, :]
    np.add.at(cov, owner, outer)
    wsum = np.bincount(owner, weights=w, minlength=n)
    cov /= np.maximum(wsum, 1e-300)[:, None, None]
    _, vecs = np.linalg.eigh(cov)
    x = _disambiguate(vecs[:, :, 2].copy(), offsets, w, owner, n)
    z = _disambiguate(vecs[:, :, 0].copy(), offsets, w, owner, n)
    y = np.cross(z, x)
    return x, y, z


def _linear_bins(pos, nbins, wrap):
    """Split a continuous bin coordinate into (lower bin, upper bin, upper weight)."""
    lo = np.floor(pos)
    frac = pos - lo
    lo = lo.astype(np.int64)
    hi = lo + 1
    if wrap:
        return lo % nbins, hi % nbins, frac
    under = lo < 0
    over = hi > nbins - 1
    lo = np.clip(lo, 0, nbins - 1)
    hi = np.clip(hi, 0, nbins - 1)
    frac = np.where(under, 1.0, np.where(over, 0.0, frac))
    return lo, hi, frac


def shot_descriptors(shape, radius=None):
    """352-bin SHOT-like descriptor per point, rows L2-normalized.

    Each point gets a local reference frame from the distance-weighted
    covariance of its neighbors within ``radius``. Neighbors are binned
    by azimuth (8), elevation (2) and radial shell (2), and within each
    sector by the cosine between their normal and the point normal (11),
    with linear interpolation between adjacent bins. The LRF z axis is the
    point normal. Points with fewer than 5 neighbors get a zero row and
    are listed in ``flagged``.
    """
    points = np.asarray(shape.points)
    n = len(points)
    if radius is None:
        radius = default_shot_radius(shape)
    if radius <= 0:
        raise ValueError("radius must be positive")
    tree = cKDTree(points)
    pairs = tree.query_pairs(radius, output_type="ndarray")
    owner = np.concatenate([pairs[:, 0], pairs[:, 1]])
    nbr = np.concatenate([pairs[:, 1], pairs[:, 0]])
    order = np.lexsort((nbr, owner))
    owner, nbr = owner[order], nbr[order]
    dist = np.linalg.norm(points[nbr] - points[owner], axis=1)
    count = np.bincount(owner, minlength=n)

    x, y, z = _lrf(points, owner, nbr, dist, radius)
    offsets = points[nbr] - points[owner]
    lx = np.einsum("ij,ij->i", offsets, x[owner])
    ly = np.einsum("ij,ij->i", offsets, y[owner])
    lz = np.einsum("ij,ij->i", offsets, z[owner])
    cos = np.clip(np.einsum("ij,ij->i", z[nbr], z[owner]), -1.0, 1.0)

    azimuth = np.arctan2(ly, lx) % (2 * np.pi)
    elevation = np.arcsin(np.clip(lz / np.maximum(dist, 1e-300), -1.0, 1.0))
    a = _linear_bins(azimuth / (2 * np.pi / N_AZIMUTH) - 0.5, N_AZIMUTH, wrap=True)
    e = _linear_bins((elevation + np.pi / 2) / (np.pi / N_ELEVATION) - 0.5, N_ELEVATION, wrap=False)
    r = _linear_bins(dist / (radius / N_RADIAL) - 0.5, N_RADIAL, wrap=False)
    c = _linear_bins((1.0 + cos) / 2.0 * N_COS - 0.5, N_COS, wrap=False)

    hist = np.zeros(n * SHOT_DIM)
    for ri, rw in ((r[0], 1 - r[2]), (r[1], r[2])):
        for ei, ew in ((e[0], 1 - e[2]), (e[1], e[2])):
            for ai, aw in ((a[0], 1 - a[2]), (a[1], a[2])):
                for ci, cw in ((c[0], 1 - c[2]), (c[1], c[2])):
                    slot = ((ri * N_ELEVATION + ei) * N_AZIMUTH + ai) * N_COS + ci
                    hist += np.bincount(owner * SHOT_DIM + slot, weights=rw * ew * aw * cw,
                                        minlength=n * SHOT_DIM)
    hist = hist.reshape(n, SHOT_DIM)
    flagged = np.flatnonzero(count < MIN_NEIGHBORS)
    hist[flagged] = 0.0
    norms = np.linalg.norm(hist, axis=1)
    ok = norms > 0
    hist[ok] /= norms[ok, None]
    return DescriptorField(hist, SHOT, radius=float(radius), flagged=flagged)


def gds_features(shape, anchors, cap=GDS_ANCHOR_CAP):
    """Column l holds graph distances to ``anchors[l]``."""
    anchors = np.asarray(anchors, dtype=np.int64)
    if not 1 <= len(anchors) <= cap:
        raise ValueError(f"need between 1 and {cap} anchors, got {len(anchors)}")
    return DescriptorField(np.ascontiguousarray(distance_rows(shape, anchors).T), GDS, anchors=anchors)


def nearest_rows(src, dst, block=1024):
    """Exact Euclidean nearest row of ``dst`` for every row of ``src`` (ties: lowest index)."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape[1] != dst.shape[1]:
        raise DimensionMismatch(f"dimension {src.shape[1]} vs {dst.shape[1]}")
    dst_sq = np.einsum("ij,ij->i", dst, dst)
    out = np.empty(len(src), dtype=np.int64)
    for start in range(0, len(src), block):
        s = src[start:start + block]
        d2 = dst_sq[None, :] - 2.0 * (s @ dst.T)
        out[start:start + block] = np.argmin(d2, axis=1)
    return out


def nn_match(src, dst):
    if src.kind != dst.kind:
        raise DimensionMismatch(f"descriptor kinds differ: {src.kind} vs {dst.kind}")
    return nearest_rows(src.values, dst.values)
