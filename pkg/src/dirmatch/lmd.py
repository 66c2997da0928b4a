"""Local mapping distortion (LMD), anchor selection and LMD pruning.

A correspondence is an int64 array ``T`` of length n1 holding target vertex
indices, with ``UNMATCHED`` (-1) for points that have no image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyNeighborhood, LengthMismatch
from .geodesics import distance_rows
from .geometry import ring_neighborhoods, vertex_areas
from .io import UNMATCHED, atomic_write_text

DEFAULT_CAP = 0.3
_CHUNK = 256


@dataclass(frozen=True)
class LmdField:
    values: np.ndarray
    gamma: np.ndarray

    def to_csv(self, path):
        rows = ["vertex,lmd,gamma"]
        rows += [f"{i},{v!r},{g!r}" for i, (v, g) in enumerate(zip(self.values.tolist(), self.gamma.tolist()))]
        atomic_write_text(path, "\n".join(rows) + "\n")


@dataclass(frozen=True)
class AnchorSet:
    """Anchor pairs sorted by source index; ``fixed`` marks landmark pairs."""

    src: np.ndarray
    dst: np.ndarray
    fixed: np.ndarray

    @classmethod
    def from_pairs(cls, pairs, fixed=True):
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        src, first = np.unique(pairs[:, 0], return_index=True)
        return cls(src, pairs[first, 1], np.full(len(src), bool(fixed)))

    @classmethod
    def empty(cls):
        z = np.zeros(0, dtype=np.int64)
        return cls(z, z.copy(), np.zeros(0, dtype=bool))

    @property
    def m(self):
        return len(self.src)

    @property
    def pairs(self):
        return np.stack([self.src, self.dst], axis=1)

    def fixed_only(self):
        return AnchorSet(self.src[self.fixed], self.dst[self.fixed], self.fixed[self.fixed])


class SourceRings:
    """Ring neighborhoods of mesh1 with their graph distances and radii.

    Depends only on the source shape, so DIR builds it once and reuses it.
    """

    def __init__(self, shape, ring_depth=2):
        reach = ring_neighborhoods(shape, ring_depth)
        counts = np.diff(reach.indptr)
        if np.any(counts == 0):
            raise EmptyNeighborhood(f"isolated vertices: {np.flatnonzero(counts == 0)[:10].tolist()}")
        self.shape = shape
        self.ring_depth = ring_depth
        self.owner = np.repeat(np.arange(shape.n), counts)
        self.nbr = reach.indices.astype(np.int64)
        limit = ring_depth * float(shape.graph.data.max()) * (1 + 1e-9)
        d1 = np.empty(len(self.nbr))
        for start in range(0, shape.n, _CHUNK):
            stop = min(start + _CHUNK, shape.n)
            rows = distance_rows(shape, np.arange(start, stop), limit=limit)
            sel = slice(reach.indptr[start], reach.indptr[stop])
            d1[sel] = rows[self.owner[sel] - start, self.nbr[sel]]
        self.d1 = d1
        self.gamma = np.zeros(shape.n)
        np.maximum.at(self.gamma, self.owner, d1)
        self.areas = vertex_areas(shape)


def lmd_field(mesh1, mesh2, T, ring_depth=2, cap=DEFAULT_CAP, rings=None):
    """Area-weighted mean of ``|d1(i,j) - d2(T(i),T(j))| / gamma_i`` over the ring of i.

    ``gamma_i`` is the largest source distance inside the ring. Target
    distances come from a Dijkstra ball around ``T(i)`` truncated at
    ``gamma_i * (1 + cap)``; neighbors imaged outside that ball contribute
    ``cap + d1(i,j) / gamma_i``. Unmatched neighbors are skipped; points
    that are unmatched or have no matched neighbor get ``inf``.
    """
    T = np.asarray(T, dtype=np.int64)
    if len(T) != mesh1.n:
        raise LengthMismatch(f"correspondence has {len(T)} entries, mesh has {mesh1.n}")
    if rings is None:
        rings = SourceRings(mesh1, ring_depth)
    I, J, d1 = rings.owner, rings.nbr, rings.d1
    gamma = rings.gamma
    ti, tj = T[I], T[J]
    live = (ti != UNMATCHED) & (tj != UNMATCHED)
    I, J, d1, ti, tj = I[live], J[live], d1[live], ti[live], tj[live]
    reach = gamma[I] * (1.0 + cap)

    # group pairs by target center; one truncated Dijkstra per distinct center
    centers, inv = np.unique(ti, return_inverse=True)
    limit = np.zeros(len(centers))
    np.maximum.at(limit, inv, reach)
    order = np.argsort(limit, kind="stable")
    pos = np.empty(len(centers), dtype=np.int64)
    pos[order] = np.arange(len(centers))
    pair_order = np.argsort(pos[inv], kind="stable")
    bounds = np.searchsorted(pos[inv][pair_order], np.arange(0, len(centers) + _CHUNK, _CHUNK))
    d2 = np.empty(len(I))
    for c, start in enumerate(range(0, len(centers), _CHUNK)):
        chunk = order[start:start + _CHUNK]
        rows = distance_rows(mesh2, centers[chunk], limit=float(limit[chunk].max()))
        sel = pair_order[bounds[c]:bounds[c + 1]]
        d2[sel] = rows[pos[inv[sel]] - start, tj[sel]]

    g = gamma[I]
    inside = d2 <= reach
    de = np.where(inside, np.abs(d1 - np.where(inside, d2, 0.0)) / g, cap + d1 / g)
    w = rings.areas[J]
    num = np.bincount(I, weights=w * de, minlength=mesh1.n)
    den = np.bincount(I, weights=w, minlength=mesh1.n)
    values = np.full(mesh1.n, np.inf)
    ok = (den > 0) & (T != UNMATCHED)
    values[ok] = num[ok] / den[ok]
    return LmdField(values, gamma.copy())


def select_anchors(lmd, T, threshold, fixed=None):
    """Fixed pairs plus every ``(i, T(i))`` with LMD below ``threshold``."""
    if not threshold >= 0:
        raise ValueError("threshold must be nonnegative")
    T = np.asarray(T, dtype=np.int64)
    good = np.flatnonzero((lmd.values < threshold) & (T != UNMATCHED))
    if fixed is None or fixed.m == 0:
        return AnchorSet(good, T[good], np.zeros(len(good), dtype=bool))
    good = good[~np.isin(good, fixed.src)]
    src = np.concatenate([fixed.src, good])
    dst = np.concatenate([fixed.dst, T[good]])
    flags = np.concatenate([np.ones(fixed.m, dtype=bool), np.zeros(len(good), dtype=bool)])
    order = np.argsort(src, kind="stable")
    return AnchorSet(src[order], dst[order], flags[order])


def prune_by_lmd(T, lmd, threshold):
    """Mark points with LMD at or above ``threshold`` as unmatched."""
    out = np.array(T, dtype=np.int64, copy=True)
    out[lmd.values >= threshold] = UNMATCHED
    return out
