"""Dual iterative refinement: LMD anchor selection alternated with global feature alignment."""

from __future__ import annotations

import logging
import time
import warnings
from dataclasses import dataclass, field, fields

import numpy as np

from .descriptors import GDS_ANCHOR_CAP, default_shot_radius, gds_features, nn_match, shot_descriptors
from .errors import ConfigError, ConvergenceWarning, EmptyAnchorSet, LengthMismatch
from .fmap import K_MIN, anchor_correlation, procrustes, recover_map, select_dimension, singular_spectrum
from .geodesics import farthest_point_sampling
from .io import UNMATCHED, atomic_write_text
from .lmd import DEFAULT_CAP, AnchorSet, SourceRings, lmd_field, select_anchors

logger = logging.getLogger(__name__)

SPECTRAL = "spectral"
GDS_MODE = "gds"
MODES = (SPECTRAL, GDS_MODE)
INITS = ("descriptor", "landmarks", "file")
DEFAULT_THRESHOLDS = (0.26, 0.22, 0.18, 0.14, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1)


@dataclass
class DirConfig:
    max_iters: int = 10
    lmd_thresholds: tuple = DEFAULT_THRESHOLDS
    K: int = 500
    ring_depth: int = 2
    mode: str = SPECTRAL
    gds_anchor_cap: int = GDS_ANCHOR_CAP
    init: str = "descriptor"
    k_min: int = K_MIN
    lmd_cap: float = DEFAULT_CAP
    shot_radius: float = 0.05  # fraction of the bounding-box diagonal
    k_local: int = 10
    prune: bool = False

    def __post_init__(self):
        self.lmd_thresholds = tuple(float(t) for t in self.lmd_thresholds)
        t = np.asarray(self.lmd_thresholds)
        if len(t) == 0 or np.any(t <= 0) or np.any(np.diff(t) > 0):
            raise ConfigError("lmd_thresholds must be positive and non-increasing")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.gds_anchor_cap < 1:
            raise ConfigError("gds_anchor_cap must be >= 1")
        if self.ring_depth < 1:
            raise ConfigError("ring_depth must be >= 1")
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        self.mode = self.mode.lower()
        self.init = self.init.lower()
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if self.init not in INITS:
            raise ConfigError(f"init must be one of {INITS}")

    def threshold(self, i):
        """Threshold for 1-based iteration ``i``; the schedule's last value repeats."""
        return self.lmd_thresholds[min(i, len(self.lmd_thresholds)) - 1]

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]


@dataclass
class IterationRecord:
    iteration: int
    m: int
    k: int | None
    epsilon: float
    lmd_median: float
    seconds: float
    anchors: AnchorSet
    fmap: object = None


@dataclass
class IterationTrace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def m(self):
        return [r.m for r in self.records]

    @property
    def k(self):
        return [r.k for r in self.records]

    def to_csv(self, path):
        rows = ["iter,m,k,epsilon,lmd_median,seconds"]
        for r in self.records:
            k = "" if r.k is None else r.k
            rows.append(f"{r.iteration},{r.m},{k},{r.epsilon!r},{r.lmd_median!r},{r.seconds:.6f}")
        atomic_write_text(path, "\n".join(rows) + "\n")


def descriptor_init(shape1, shape2, radius_fraction=0.05):
    """Nearest-neighbor map between SHOT-like descriptors."""
    d1 = shot_descriptors(shape1, default_shot_radius(shape1, radius_fraction))
    d2 = shot_descriptors(shape2, default_shot_radius(shape2, radius_fraction))
    if len(d1.flagged):
        logger.info("%d source points have too few descriptor neighbors", len(d1.flagged))
    return nn_match(d1, d2)


def _split_init(init, n1):
    """(correspondence or None, fixed landmark anchors)."""
    if isinstance(init, AnchorSet):
        if init.m == 0:
            raise EmptyAnchorSet("landmark initialization has no pairs")
        return None, AnchorSet(init.src, init.dst, np.ones(init.m, dtype=bool))
    T = np.asarray(init, dtype=np.int64)
    if len(T) != n1:
        raise LengthMismatch(f"initial correspondence has {len(T)} entries, expected {n1}")
    return T, AnchorSet.empty()


def _lmd_median(lmd):
    if lmd is None:
        return float("nan")
    finite = lmd.values[np.isfinite(lmd.values)]
    return float(np.median(finite)) if len(finite) else float("inf")


def _select(shape1, shape2, T, fixed, eps, cfg, rings):
    if T is None:
        return fixed, None
    lmd = lmd_field(shape1, shape2, T, cfg.ring_depth, cfg.lmd_cap, rings=rings)
    return select_anchors(lmd, T, eps, fixed), lmd


def _watch_decrease(trace):
    m = trace.m
    if len(m) >= 4 and m[-4] > m[-3] > m[-2] > m[-1]:
        warnings.warn("anchor count decreased three iterations in a row", ConvergenceWarning, stacklevel=3)


def dir_spectral(shape1, shape2, emb1, emb2, init, cfg=None):
    """Refine a correspondence by aligning spectral embeddings on LMD-selected anchors.

    ``init`` is either a full correspondence (length n1) or an ``AnchorSet``
    of landmarks, which stay anchors in every iteration. Iteration stops
    after ``max_iters`` or once the supported spectral dimension reaches
    the embedding cap ``K``.

    Returns ``(T, trace)``.
    """
    cfg = cfg or DirConfig()
    K = min(cfg.K, emb1.K, emb2.K)
    T, fixed = _split_init(init, shape1.n)
    rings = SourceRings(shape1, cfg.ring_depth)
    trace = IterationTrace()
    for i in range(1, cfg.max_iters + 1):
        start = time.perf_counter()
        eps = cfg.threshold(i)
        anchors, lmd = _select(shape1, shape2, T, fixed, eps, cfg, rings)
        if anchors.m == 0:
            raise EmptyAnchorSet(
                f"iteration {i}: no point has LMD below {eps} and there are no landmarks"
            )
        spectrum = singular_spectrum(anchor_correlation(emb1, emb2, anchors, K))
        k = select_dimension(spectrum, anchors.m, K, k_min=cfg.k_min)
        C = procrustes(emb1, emb2, anchors, k)
        T = recover_map(emb1, emb2, C)
        trace.records.append(IterationRecord(
            i, anchors.m, k, eps, _lmd_median(lmd), time.perf_counter() - start, anchors, C))
        logger.info("iteration %d: m=%d k=%d eps=%.3g", i, anchors.m, k, eps)
        _watch_decrease(trace)
        if k >= K:
            break
    return T, trace


def _cap_anchors(shape1, anchors, cap):
    """Farthest-point subsample of the anchors on the source shape, landmarks first."""
    if anchors.m <= cap:
        return anchors
    seeds = anchors.src[anchors.fixed][:cap]
    if len(seeds) == 0:
        seeds = anchors.src[:1]
    keep = farthest_point_sampling(shape1, cap, seeds=seeds, candidates=anchors.src)
    keep = np.sort(keep)
    rows = np.searchsorted(anchors.src, keep)
    return AnchorSet(anchors.src[rows], anchors.dst[rows], anchors.fixed[rows])


def dir_gds(shape1, shape2, init, cfg=None):
    """Refinement with geodesic distance signatures to the anchors as global features.

    Handles patches and partial shapes, where spectra are unreliable. More
    than ``gds_anchor_cap`` anchors are thinned by farthest-point sampling.
    Stops after ``max_iters`` or when the anchor set stops changing.

    Returns ``(T, trace)``.
    """
    cfg = cfg or DirConfig(mode=GDS_MODE)
    T, fixed = _split_init(init, shape1.n)
    rings = SourceRings(shape1, cfg.ring_depth)
    trace = IterationTrace()
    previous = None
    for i in range(1, cfg.max_iters + 1):
        start = time.perf_counter()
        eps = cfg.threshold(i)
        anchors, lmd = _select(shape1, shape2, T, fixed, eps, cfg, rings)
        if anchors.m == 0:
            raise EmptyAnchorSet(
                f"iteration {i}: no point has LMD below {eps} and there are no landmarks"
            )
        anchors = _cap_anchors(shape1, anchors, cfg.gds_anchor_cap)
        if previous is not None and np.array_equal(anchors.src, previous.src) \
                and np.array_equal(anchors.dst, previous.dst):
            break
        f1 = gds_features(shape1, anchors.src, cap=cfg.gds_anchor_cap)
        f2 = gds_features(shape2, anchors.dst, cap=cfg.gds_anchor_cap)
        T = nn_match(f1, f2)
        trace.records.append(IterationRecord(
            i, anchors.m, None, eps, _lmd_median(lmd), time.perf_counter() - start, anchors))
        logger.info("iteration %d: m=%d eps=%.3g", i, anchors.m, eps)
        _watch_decrease(trace)
        previous = anchors
    return T, trace


def prune_final(shape1, shape2, T, cfg):
    """Post-pass for partial matching: drop points whose final LMD fails the last threshold."""
    from .lmd import prune_by_lmd

    lmd = lmd_field(shape1, shape2, T, cfg.ring_depth, cfg.lmd_cap)
    return prune_by_lmd(T, lmd, cfg.threshold(cfg.max_iters)), lmd


__all__ = [
    "DirConfig", "IterationRecord", "IterationTrace", "descriptor_init",
    "dir_spectral", "dir_gds", "prune_final", "UNMATCHED",
]
