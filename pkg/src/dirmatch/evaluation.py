"""Normalized geodesic error of a correspondence against ground truth."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch
from .geodesics import distance_rows, estimate_diameter
from .io import UNMATCHED, atomic_write_text

DEFAULT_MAX_THRESHOLD = 0.25
DEFAULT_POINTS = 100


@dataclass(frozen=True)
class ErrorCurve:
    thresholds: np.ndarray
    fractions: np.ndarray
    auc: float
    per_point: np.ndarray
    diameter: float

    @property
    def mean_error(self):
        """Mean over matched points (unmatched points are excluded here)."""
        finite = self.per_point[np.isfinite(self.per_point)]
        return float(finite.mean()) if len(finite) else float("inf")

    def fraction_below(self, t):
        e = self.per_point[~np.isnan(self.per_point)]
        return float(np.mean(e <= t)) if len(e) else 0.0

    def to_csv(self, path):
        rows = ["threshold,fraction"] + [f"{t!r},{f!r}" for t, f in zip(self.thresholds.tolist(), self.fractions.tolist())]
        atomic_write_text(path, "\n".join(rows) + "\n")

    def per_point_csv(self, path):
        rows = ["vertex,error"] + [f"{i},{e!r}" for i, e in enumerate(self.per_point.tolist())]
        atomic_write_text(path, "\n".join(rows) + "\n")


def pairwise_target_distances(shape, a, b, chunk=256):
    """Graph distances ``d(a[p], b[p])`` on ``shape``, one Dijkstra per distinct ``a``."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    out = np.zeros(len(a))
    todo = np.flatnonzero(a != b)
    if len(todo) == 0:
        return out
    sources, inv = np.unique(a[todo], return_inverse=True)
    for start in range(0, len(sources), chunk):
        sel = (inv >= start) & (inv < start + chunk)
        rows = distance_rows(shape, sources[start:start + chunk])
        out[todo[sel]] = rows[inv[sel] - start, b[todo[sel]]]
    return out


def error_curve(per_point, max_threshold=DEFAULT_MAX_THRESHOLD, points=DEFAULT_POINTS, diameter=np.nan):
    """Cumulative fraction of points with error at or below each threshold.

    ``nan`` entries (no ground truth) are left out; ``inf`` entries count
    but never fall below a threshold.
    """
    per_point = np.asarray(per_point, dtype=np.float64)
    thresholds = np.linspace(0.0, max_threshold, points)
    e = np.sort(per_point[~np.isnan(per_point)])
    if len(e):
        fractions = np.searchsorted(e, thresholds, side="right") / len(e)
    else:
        fractions = np.zeros(points)
    auc = float(np.trapezoid(fractions, thresholds))
    return ErrorCurve(thresholds, fractions, auc, per_point, float(diameter))


def geodesic_error(T, T_gt, mesh2, diameter=None, max_threshold=DEFAULT_MAX_THRESHOLD, points=DEFAULT_POINTS):
    """Per-point ``d2(T(x), T_gt(x)) / diam(mesh2)`` and its cumulative curve.

    Points unmatched in ``T`` get ``inf``; points without ground truth
    (unmatched in ``T_gt``) get ``nan`` and are excluded from the curve.
    """
    T = np.asarray(T, dtype=np.int64)
    T_gt = np.asarray(T_gt, dtype=np.int64)
    if len(T) != len(T_gt):
        raise LengthMismatch(f"map has {len(T)} entries, ground truth has {len(T_gt)}")
    if diameter is None:
        diameter = estimate_diameter(mesh2)
    per_point = np.full(len(T), np.inf)
    per_point[T_gt == UNMATCHED] = np.nan
    ok = (T != UNMATCHED) & (T_gt != UNMATCHED)
    # run each Dijkstra from the smaller index so swapping T and T_gt is bit-exact
    lo, hi = np.minimum(T_gt[ok], T[ok]), np.maximum(T_gt[ok], T[ok])
    per_point[ok] = pairwise_target_distances(mesh2, lo, hi) / diameter
    return error_curve(per_point, max_threshold, points, diameter)
