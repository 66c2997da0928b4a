"""Involution counting and Monte-Carlo study of functional-map error under shuffled rows."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExceeded
from .fmap import procrustes
from .io import atomic_write_text
from .lmd import AnchorSet
from .spectral import SpectralEmbedding

BRUTE_FORCE_MAX = 10


def involution_probability(n2):
    """Fraction of permutations of ``n2`` items that are involutions.

    ``sum_j 1 / (2^j j! (n2 - 2j)!)``, evaluated term by term in log space.
    """
    n2 = int(n2)
    if n2 < 1:
        raise ValueError("n2 must be a positive integer")
    terms = (
        math.exp(-(j * math.log(2.0) + math.lgamma(j + 1) + math.lgamma(n2 - 2 * j + 1)))
        for j in range(n2 // 2 + 1)
    )
    return math.fsum(terms)


def count_involutions_bruteforce(n2):
    """Enumerate all ``n2!`` permutations and count those equal to their inverse."""
    n2 = int(n2)
    if n2 > BRUTE_FORCE_MAX:
        raise BudgetExceeded(f"n2={n2} exceeds the enumeration budget of {BRUTE_FORCE_MAX}")
    if n2 < 0:
        raise ValueError("n2 must be nonnegative")
    if n2 == 0:
        return 1
    total = math.factorial(n2)
    flat = np.fromiter(
        itertools.chain.from_iterable(itertools.permutations(range(n2))),
        dtype=np.int8, count=total * n2,
    )
    perms = flat.reshape(total, n2)
    squared = np.take_along_axis(perms, perms.astype(np.intp), axis=1)
    return int(np.all(squared == np.arange(n2, dtype=np.int8), axis=1).sum())


@dataclass(frozen=True)
class PerturbationStats:
    k: int
    n: int
    n2: int
    samples: np.ndarray

    @property
    def trials(self):
        return len(self.samples)

    @property
    def summary(self):
        if self.trials == 0:
            return {}
        q = np.quantile(self.samples, [0.0, 0.25, 0.5, 0.75, 1.0])
        return dict(zip(("min", "q1", "median", "q3", "max"), q.tolist()))

    @property
    def median(self):
        return float(np.median(self.samples))

    def csv_rows(self, with_summary=True):
        rows = [f"{t},{self.k},{self.n},{self.n2},{e!r}" for t, e in enumerate(self.samples.tolist())]
        if with_summary:
            rows += [f"{name},{self.k},{self.n},{self.n2},{v!r}" for name, v in self.summary.items()]
        return rows


def write_stats_csv(path, stats):
    """One row per trial, then min/q1/median/q3/max rows per setting (label in the trial column)."""
    rows = ["trial,k,n,n2,error"]
    for s in stats:
        rows += s.csv_rows(with_summary=False)
    for s in stats:
        rows += [r for r in s.csv_rows() if not r.split(",", 1)[0].isdigit()]
    atomic_write_text(path, "\n".join(rows) + "\n")


def random_orthonormal(rng, rows, cols):
    """Haar-distributed matrix with orthonormal columns (QR of a Gaussian)."""
    q, r = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q * np.sign(np.diag(r))


def perturbation_experiment(k, n, n2, trials, seed=0, embedding=None, involutive=False):
    """Spectral-norm error of the orthonormal functional map when ``n2`` rows are shuffled.

    Each trial draws a random orthonormal ground-truth map ``C_T``, sets
    ``Phi2 = Phi1 @ C_T``, applies a random permutation to a random subset
    of ``n2`` rows of ``Phi2``, fits ``C_a`` over all ``n`` rows and records
    ``||C_a - C_T||_2``. ``Phi1`` is a synthetic orthonormal n-by-k matrix
    unless ``embedding`` (a SpectralEmbedding) is given. ``involutive``
    replaces the permutation by the identity.
    """
    if embedding is not None:
        n = embedding.n
    if not (1 <= k and 0 <= n2 <= n and k <= n):
        raise ValueError(f"invalid sizes k={k}, n={n}, n2={n2}")
    root = np.random.SeedSequence(seed)
    emb_seed, *trial_seeds = root.spawn(trials + 1)
    if embedding is None:
        phi1 = random_orthonormal(np.random.default_rng(emb_seed), n, k)
    else:
        if k > embedding.K:
            raise ValueError(f"k={k} exceeds embedding size {embedding.K}")
        phi1 = embedding.phi[:, :k]
    emb1 = SpectralEmbedding(phi1, np.zeros(k))
    src = np.arange(n)
    samples = np.empty(trials)
    for t, ss in enumerate(trial_seeds):
        rng = np.random.default_rng(ss)
        C_T = random_orthonormal(rng, k, k)
        emb2 = SpectralEmbedding(phi1 @ C_T, np.zeros(k))
        dst = src.copy()
        subset = rng.choice(n, size=n2, replace=False)
        if not involutive:
            dst[subset] = subset[rng.permutation(n2)]
        C_a = procrustes(emb1, emb2, AnchorSet(src, dst, np.zeros(n, dtype=bool)), k).C
        samples[t] = np.linalg.norm(C_a - C_T, 2)
    return PerturbationStats(k, n, n2, samples)
