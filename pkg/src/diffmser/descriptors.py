"""Point and region descriptors.

Point descriptors are the heat kernel signature (HKS), ``h_t(v, v)`` at a few
times, and its scale-invariant version (SI-HKS), the first discrete
frequencies of the modified heat kernel.  Region descriptors pool a point
descriptor over a region, either as an area-weighted average or as a local
bag of features over a clustered geometric vocabulary.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np
from sklearn.cluster import KMeans

from .spectral import TIME_GRID, auto_diffusivity, modified_auto_diffusivity

DEFAULT_HKS_TIMES = (16.0, 22.6, 32.0, 45.2, 64.0, 90.5, 128.0)
DEFAULT_SIHKS_FREQS = 6

VOCAB_FORMAT = "diffmser-vocabulary"
VOCAB_VERSION = 1


@dataclass(frozen=True, eq=False)
class PointDescriptorField:
    """Per-vertex descriptor vectors.

    Attributes
    ----------
    values : ndarray, shape=[N, q]
    kind : str
        ``"hks"`` or ``"sihks"``.
    params : tuple
        HKS times or SI-HKS frequency indices.
    """

    values: np.ndarray
    kind: str
    params: tuple

    @property
    def dim(self):
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class RegionDescriptor:
    values: np.ndarray
    kind: str


def hks_field(basis, times=DEFAULT_HKS_TIMES):
    """Heat kernel signature ``(h_t1(v, v), ..., h_tq(v, v))``."""
    times = tuple(float(t) for t in times)
    if not times or min(times) <= 0:
        raise ValueError("HKS times must be positive")
    values = auto_diffusivity(basis, np.array(times))
    return PointDescriptorField(values, "hks", times)


def sihks_field(basis, grid=TIME_GRID, num_freqs=DEFAULT_SIHKS_FREQS):
    """Scale-invariant HKS: the first ``num_freqs`` modified heat kernel magnitudes."""
    if not 1 <= num_freqs <= len(grid):
        raise ValueError(f"num_freqs must be in [1, {len(grid)}]")
    values = modified_auto_diffusivity(basis, grid)[:, :num_freqs]
    return PointDescriptorField(values, "sihks", tuple(range(num_freqs)))


def _members(region):
    verts = getattr(region, "vertices", region)
    verts = np.asarray(verts, dtype=np.int64)
    if verts.size == 0:
        raise ValueError("region is empty")
    return verts


def region_average(field, region, areas):
    """Area-weighted mean of a point descriptor over a region.

    ``beta = sum(alpha(v) da(v)) / A(C)``; dividing by the region area makes
    the descriptor independent of region size.
    """
    verts = _members(region)
    values = field.values if isinstance(field, PointDescriptorField) else np.asarray(field)
    da = np.asarray(areas, dtype=float)[verts]
    total = da.sum()
    if not total > 0:
        raise ValueError("region has zero area")
    return RegionDescriptor(da @ values[verts] / total, "average")


@dataclass(frozen=True, eq=False)
class Vocabulary:
    """Geometric vocabulary of ``p`` centroids in descriptor space.

    Attributes
    ----------
    centroids : ndarray, shape=[p, q]
    sigma : float
        Default soft-quantization spread: median distance from a training
        vector to its nearest centroid.
    seed, n_iter : int
        Training metadata.
    """

    centroids: np.ndarray
    sigma: float
    seed: int
    n_iter: int

    @property
    def size(self):
        return self.centroids.shape[0]

    def to_dict(self):
        return {
            "format": VOCAB_FORMAT,
            "version": VOCAB_VERSION,
            "p": int(self.centroids.shape[0]),
            "q": int(self.centroids.shape[1]),
            "seed": int(self.seed),
            "n_iter": int(self.n_iter),
            "sigma": float(self.sigma),
            "centroids": self.centroids.tolist(),
        }

    @classmethod
    def from_dict(cls, doc):
        if doc.get("format") != VOCAB_FORMAT or doc.get("version") != VOCAB_VERSION:
            raise ValueError("not a version-1 vocabulary document")
        centroids = np.asarray(doc["centroids"], dtype=float)
        if centroids.shape != (doc["p"], doc["q"]):
            raise ValueError("vocabulary centroid array does not match p and q")
        return cls(centroids, float(doc["sigma"]), int(doc["seed"]), int(doc["n_iter"]))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(os.fspath(path), encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def build_vocabulary(fields, p, seed=0, max_iter=300):
    """Cluster training descriptors into ``p`` words with k-means++ and Lloyd iterations.

    Parameters
    ----------
    fields : iterable of PointDescriptorField or ndarray
        Training descriptors, stacked row-wise.
    p : int
        Vocabulary size, at least 2.
    seed : int
    max_iter : int

    Raises
    ------
    ValueError
        If there are fewer than ``p`` distinct training vectors.
    """
    data = np.vstack(
        [f.values if isinstance(f, PointDescriptorField) else np.atleast_2d(f) for f in fields]
    ).astype(float)
    if p < 2:
        raise ValueError("vocabulary size must be at least 2")
    if len(np.unique(data, axis=0)) < p:
        raise ValueError(f"need at least {p} distinct training vectors, got {len(np.unique(data, axis=0))}")
    km = KMeans(
        n_clusters=p, init="k-means++", n_init=1, max_iter=max_iter, tol=0.0,
        random_state=seed, algorithm="lloyd",
    ).fit(data)
    centroids = km.cluster_centers_
    d = np.sqrt(np.min(_sq_dist(data, centroids), axis=1))
    return Vocabulary(centroids, float(np.median(d)), int(seed), int(km.n_iter_))


def _sq_dist(a, b):
    return np.sum(np.square(a[:, None, :] - b[None, :, :]), axis=2)


def soft_quantize(alpha, vocab, sigma=None):
    """Distribution over vocabulary words, ``theta_l ~ exp(-|alpha - c_l|^2 / 2 sigma^2)``.

    ``sigma = 0`` gives hard assignment to the nearest word, ties going to
    the lowest index; ``None`` uses the vocabulary's default spread.

    Parameters
    ----------
    alpha : array_like, shape=[q] or [M, q]

    Returns
    -------
    ndarray, shape=[p] or [M, p]
        Rows sum to one.
    """
    centroids = vocab.centroids if isinstance(vocab, Vocabulary) else np.asarray(vocab, dtype=float)
    if sigma is None:
        sigma = vocab.sigma
    alpha = np.asarray(alpha, dtype=float)
    single = alpha.ndim == 1
    alpha = np.atleast_2d(alpha)
    if alpha.shape[1] != centroids.shape[1]:
        raise ValueError(f"descriptor dimension {alpha.shape[1]} != vocabulary dimension {centroids.shape[1]}")
    d2 = _sq_dist(alpha, centroids)
    if sigma == 0:
        theta = np.zeros_like(d2)
        theta[np.arange(len(d2)), np.argmin(d2, axis=1)] = 1.0
    else:
        logits = -d2 / (2.0 * sigma**2)
        logits -= logits.max(axis=1, keepdims=True)
        theta = np.exp(logits)
        theta /= theta.sum(axis=1, keepdims=True)
    return theta[0] if single else theta


def quantize_field(field, vocab, sigma=None):
    """Apply :func:`soft_quantize` to every vertex of a point descriptor field."""
    values = field.values if isinstance(field, PointDescriptorField) else field
    return soft_quantize(np.atleast_2d(values), vocab, sigma)


def region_bof(theta, region, areas):
    """Local bag of features: area-weighted sum of word distributions, L1-normalized."""
    verts = _members(region)
    da = np.asarray(areas, dtype=float)[verts]
    acc = da @ np.asarray(theta, dtype=float)[verts]
    total = acc.sum()
    if not total > 0:
        raise ValueError("region has zero area")
    return RegionDescriptor(acc / total, "bof")
