"""Edge-graph geodesic distances: truncated balls, multi-source fields, diameter."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import csgraph

from .errors import DisconnectedMesh, IndexOutOfRange
from .io import atomic_write_text


@dataclass(frozen=True)
class GeodesicBall:
    center: int
    radius: float
    vertices: np.ndarray
    distances: np.ndarray

    def as_dict(self):
        return dict(zip(self.vertices.tolist(), self.distances.tolist()))


@dataclass(frozen=True)
class DistanceField:
    sources: np.ndarray
    distances: np.ndarray

    def to_csv(self, path):
        rows = ["vertex,distance"] + [f"{v},{d!r}" for v, d in enumerate(self.distances.tolist())]
        atomic_write_text(path, "\n".join(rows) + "\n")


def _check(shape, idx):
    idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
    if idx.size and (idx.min() < 0 or idx.max() >= shape.n):
        raise IndexOutOfRange(f"vertex index out of range [0, {shape.n})")
    return idx


def geodesic_ball(shape, i, radius):
    """Dijkstra from ``i`` truncated at ``radius``."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    _check(shape, i)
    d = csgraph.dijkstra(shape.graph, directed=False, indices=int(i), limit=radius)
    inside = np.flatnonzero(d <= radius)
    return GeodesicBall(int(i), float(radius), inside, d[inside])


def distance_rows(shape, sources, limit=np.inf):
    """One row of graph distances per source (``inf`` past ``limit``)."""
    sources = _check(shape, sources)
    return csgraph.dijkstra(shape.graph, directed=False, indices=sources, limit=limit)


def multi_source_distances(shape, sources):
    """Distance from every vertex to the nearest of ``sources``."""
    sources = np.unique(_check(shape, sources))
    if sources.size == 0:
        raise ValueError("sources must be nonempty")
    d = csgraph.dijkstra(shape.graph, directed=False, indices=sources, min_only=True)
    return DistanceField(sources, d)


def farthest_point_sampling(shape, count, seeds=(0,), candidates=None):
    """Greedy farthest-point sample in the graph metric.

    Starts from ``seeds`` (kept, in order) and adds the candidate farthest
    from everything chosen so far until ``count`` points are selected. Ties
    go to the lowest index.
    """
    seeds = [int(s) for s in seeds]
    if candidates is None:
        allowed = np.ones(shape.n, dtype=bool)
    else:
        allowed = np.zeros(shape.n, dtype=bool)
        allowed[np.asarray(candidates, dtype=np.int64)] = True
    chosen = list(dict.fromkeys(seeds))[:count]
    if not chosen:
        chosen = [int(np.flatnonzero(allowed)[0])]
    count = min(count, int(allowed.sum() + sum(not allowed[s] for s in chosen)))
    d = multi_source_distances(shape, chosen).distances
    while len(chosen) < count:
        masked = np.where(allowed, d, -1.0)
        masked[chosen] = -1.0
        nxt = int(np.argmax(masked))
        chosen.append(nxt)
        d = np.minimum(d, distance_rows(shape, [nxt])[0])
    return np.array(chosen, dtype=np.int64)


def estimate_diameter(shape, samples=20):
    """Largest eccentricity over a farthest-point sample of ``samples`` vertices."""
    d0 = distance_rows(shape, [0])[0]
    if not np.all(np.isfinite(d0)):
        raise DisconnectedMesh(f"{int(np.sum(~np.isfinite(d0)))} vertices unreachable from vertex 0")
    sample = farthest_point_sampling(shape, min(samples, shape.n), seeds=(0,))
    rows = distance_rows(shape, sample)
    return float(rows.max())
