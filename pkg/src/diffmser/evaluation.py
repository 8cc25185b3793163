"""Benchmark protocol: region overlap, repeatability, ROC/EER and matching score.

``X`` denotes the null (reference) shape and ``Y`` its transformed version.
A ground-truth correspondence maps every vertex of ``Y`` to a vertex of
``X`` (or marks it missing), optionally with a second map composed with the
intrinsic symmetry of the shape.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import sparse

from .errors import DataMismatchError

MISSING = -1


@dataclass(frozen=True, eq=False)
class Correspondence:
    """Transformed-to-null vertex maps.

    Attributes
    ----------
    forward : ndarray, shape=[N_Y]
        Null-shape vertex of every transformed vertex, ``-1`` if missing.
    n_null : int
        Number of null-shape vertices.
    symmetric : ndarray, shape=[N_Y], optional
        The same map composed with the shape's intrinsic symmetry.
    """

    forward: np.ndarray
    n_null: int
    symmetric: np.ndarray | None = None

    def __post_init__(self):
        for name in ("forward", "symmetric"):
            m = getattr(self, name)
            if m is None:
                continue
            m = np.asarray(m, dtype=np.int64)
            if m.ndim != 1:
                raise ValueError(f"{name} map must be one-dimensional")
            bad = np.flatnonzero((m < MISSING) | (m >= self.n_null))
            if bad.size:
                raise DataMismatchError(
                    f"{name} map entry {bad[0]} = {m[bad[0]]} is outside [-1, {self.n_null})"
                )
            object.__setattr__(self, name, m)
        if self.symmetric is not None and len(self.symmetric) != len(self.forward):
            raise DataMismatchError("symmetric map length differs from the forward map")

    @property
    def n_transformed(self):
        return len(self.forward)

    @property
    def maps(self):
        return [self.forward] if self.symmetric is None else [self.forward, self.symmetric]

    @classmethod
    def identity(cls, n):
        return cls(np.arange(n), n)

    @classmethod
    def load(cls, path, n_null, symmetric_path=None):
        """Read one null index (or -1) per line."""
        fwd = _read_map(path)
        sym = _read_map(symmetric_path) if symmetric_path is not None else None
        return cls(fwd, int(n_null), sym)


def _read_map(path):
    values = []
    with open(os.fspath(path), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                values.append(int(line))
            except ValueError:
                raise DataMismatchError(f"{path}:{lineno}: not an integer vertex index") from None
    return np.array(values, dtype=np.int64)


def write_map(mapping, path):
    with open(path, "w", encoding="utf-8") as fh:
        for v in np.asarray(mapping).tolist():
            fh.write(f"{int(v)}\n")


def _verts(region):
    return np.asarray(getattr(region, "vertices", region), dtype=np.int64)


def map_region(mapping, region, areas=None):
    """Image of a transformed-shape region on the null shape.

    Parameters
    ----------
    mapping : ndarray or Correspondence
        Vertex map (``Correspondence`` uses its forward map).
    region : array_like of int or StableRegion
    areas : array_like, optional
        Transformed-shape vertex areas used to weigh the dropped fraction;
        vertex counts are used otherwise.

    Returns
    -------
    image : ndarray
        Sorted unique null-shape vertices.
    dropped : float
        Fraction of the region (by area) whose vertices have no image.
    """
    if isinstance(mapping, Correspondence):
        mapping = mapping.forward
    verts = _verts(region)
    if verts.size == 0:
        return np.empty(0, dtype=np.int64), 0.0
    images = np.asarray(mapping)[verts]
    missing = images == MISSING
    w = np.ones(len(verts)) if areas is None else np.asarray(areas, dtype=float)[verts]
    dropped = float(w[missing].sum() / w.sum()) if w.sum() > 0 else float(missing.mean())
    return np.unique(images[~missing]), dropped


def overlap(r1, r2, areas):
    """Intersection-over-union area ratio of two regions on the same shape."""
    a = np.asarray(areas, dtype=float)
    v1 = np.unique(_verts(r1))
    v2 = np.unique(_verts(r2))
    a1 = a[v1].sum()
    a2 = a[v2].sum()
    inter = a[np.intersect1d(v1, v2, assume_unique=True)].sum()
    union = a1 + a2 - inter
    if union <= 0:
        return 0.0
    return float(inter / union)


def _indicator(regions, n):
    rows, cols = [], []
    for i, r in enumerate(regions):
        v = np.unique(_verts(r))
        rows.append(np.full(len(v), i))
        cols.append(v)
    rows = np.concatenate(rows) if rows else np.empty(0, int)
    cols = np.concatenate(cols) if cols else np.empty(0, int)
    return sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(regions), n))


def overlap_matrix(regions_a, regions_b, areas):
    """Pairwise overlaps, shape=[len(regions_a), len(regions_b)]."""
    a = np.asarray(areas, dtype=float)
    ia = _indicator(regions_a, len(a))
    ib = _indicator(regions_b, len(a))
    area_a = ia @ a
    area_b = ib @ a
    inter = np.asarray((ia @ sparse.diags(a) @ ib.T).todense()).reshape(len(regions_a), len(regions_b))
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
    return out


def image_overlaps(null_regions, transformed_regions, corr, null_areas):
    """Overlap of every transformed region's image with every null region.

    With a symmetric map, each pair takes the better of the direct and the
    symmetric image.

    Returns
    -------
    O : ndarray, shape=[n, m]
        ``O[j, i]`` compares transformed region ``j`` with null region ``i``.
    valid : ndarray of bool, shape=[n]
        Regions with a non-empty image under at least one map.
    """
    n, m = len(transformed_regions), len(null_regions)
    best = np.zeros((n, m))
    valid = np.zeros(n, dtype=bool)
    for mapping in corr.maps:
        images = [map_region(mapping, r)[0] for r in transformed_regions]
        valid |= np.array([len(im) > 0 for im in images], dtype=bool)
        if n and m:
            best = np.maximum(best, overlap_matrix(images, null_regions, null_areas))
    return best, valid


def greedy_matches(overlaps):
    """One-to-one matching by descending overlap; ties by row then column.

    Returns a list of ``(row, col, overlap)`` for positive overlaps.
    """
    o = np.asarray(overlaps, dtype=float)
    rows, cols = np.nonzero(o > 0)
    vals = o[rows, cols]
    order = np.lexsort((cols, rows, -vals))
    used_r, used_c = set(), set()
    out = []
    for k in order.tolist():
        r, c = int(rows[k]), int(cols[k])
        if r in used_r or c in used_c:
            continue
        used_r.add(r)
        used_c.add(c)
        out.append((r, c, float(vals[k])))
    return out


@dataclass(frozen=True, eq=False)
class RepeatabilityCurve:
    """Repeatability and number of correspondences per overlap threshold.

    ``n_regions`` is the number of transformed-shape regions and ``n_valid``
    the number of those with a non-empty image, the denominator.
    """

    thresholds: np.ndarray
    repeatability: np.ndarray
    correspondences: np.ndarray
    n_regions: int
    n_valid: int

    def at(self, threshold):
        i = int(np.argmin(np.abs(self.thresholds - threshold)))
        if not np.isclose(self.thresholds[i], threshold):
            raise KeyError(f"threshold {threshold} was not evaluated")
        return float(self.repeatability[i]), int(self.correspondences[i])


def repeatability(null_regions, transformed_regions, corr, null_areas, thresholds):
    """Detector repeatability of transformed-shape regions against the null shape.

    A transformed region is repeated at threshold ``o`` if the greedy
    one-to-one matching pairs it with a null region at overlap greater than
    ``o``.  Comparison is single-sided: unmatched null regions do not count.

    Parameters
    ----------
    null_regions, transformed_regions : sequence of regions
    corr : Correspondence
    null_areas : array_like
        Vertex areas of the null shape.
    thresholds : sequence of float

    Returns
    -------
    RepeatabilityCurve
    """
    thresholds = np.asarray(thresholds, dtype=float)
    O, valid = image_overlaps(null_regions, transformed_regions, corr, null_areas)
    n_valid = int(valid.sum())
    matched = np.array([o for _, _, o in greedy_matches(O)])
    counts = np.array([int(np.sum(matched > o)) for o in thresholds], dtype=np.int64)
    if n_valid == 0:
        warnings.warn("no transformed-shape region has an image; repeatability set to 0", stacklevel=2)
        rep = np.zeros(len(thresholds))
    else:
        rep = counts / n_valid
    return RepeatabilityCurve(thresholds, rep, counts, len(transformed_regions), n_valid)


@dataclass(frozen=True, eq=False)
class RocCurve:
    """ROC sweep over descriptor-distance thresholds.

    ``thresholds[0]`` is ``-inf`` (nothing accepted); the remaining entries are
    the distinct observed distances in ascending order.
    """

    thresholds: np.ndarray
    tpr: np.ndarray
    fpr: np.ndarray
    eer: float
    n_positive: int
    n_negative: int


def equal_error_rate(fpr, tpr):
    """EER where ``FPR = 1 - TPR``, linearly interpolated between sweep points.

    ``fpr`` and ``tpr`` must be non-decreasing and start at ``(0, 0)``.  The
    rates may be floats or :class:`fractions.Fraction`; with fractions the
    crossing is exact and rounded once.
    """
    fnr = [1 - t for t in tpr]
    gap = [f - n for f, n in zip(fpr, fnr)]
    k = next(i for i, g in enumerate(gap) if g >= 0)
    if gap[k] == 0:
        return float(fpr[k])
    f0, f1, n0, n1 = fpr[k - 1], fpr[k], fnr[k - 1], fnr[k]
    lam = (n0 - f0) / ((f1 - f0) - (n1 - n0))
    return float(f0 + lam * (f1 - f0))


def descriptor_roc(d, o, rho=0.75):
    """ROC and EER of descriptor distances against region overlaps.

    A pair is positive when its overlap is at least ``rho`` and accepted at
    threshold ``tau`` when its descriptor distance is at most ``tau``.  TPR
    and FPR are the accepted fractions of positive and negative pairs.

    Raises
    ------
    ValueError
        If there are no positive or no negative pairs.
    """
    d = np.ravel(np.asarray(d, dtype=float))
    o = np.ravel(np.asarray(o, dtype=float))
    if d.shape != o.shape:
        raise ValueError("distances and overlaps must cover the same pairs")
    pos = o >= rho
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError(f"need both matching and non-matching pairs (got {n_pos} and {n_neg})")
    taus = np.unique(d)
    tp = np.searchsorted(np.sort(d[pos]), taus, side="right")
    fp = np.searchsorted(np.sort(d[~pos]), taus, side="right")
    tpr = np.concatenate([[0.0], tp / n_pos])
    fpr = np.concatenate([[0.0], fp / n_neg])
    thresholds = np.concatenate([[-np.inf], taus])
    # exact rational rates for the crossing
    eer = equal_error_rate(
        [Fraction(0)] + [Fraction(int(x), n_neg) for x in fp],
        [Fraction(0)] + [Fraction(int(x), n_pos) for x in tp],
    )
    return RocCurve(thresholds, tpr, fpr, eer, n_pos, n_neg)


@dataclass(frozen=True, eq=False)
class MatchingScore:
    rhos: np.ndarray
    score: np.ndarray
    correct: np.ndarray
    first_match: np.ndarray
    m: int


def matching_score(d, o, rhos):
    """Fraction of null regions whose nearest descriptor has overlap at least ``rho``.

    Parameters
    ----------
    d, o : array_like, shape=[m, n]
        Descriptor distances and overlaps between null region ``i`` and
        transformed region ``j``.
    rhos : sequence of float

    Returns
    -------
    MatchingScore
        ``first_match[i]`` is the nearest transformed region (lowest index
        on ties).
    """
    d = np.atleast_2d(np.asarray(d, dtype=float))
    o = np.atleast_2d(np.asarray(o, dtype=float))
    if d.shape != o.shape:
        raise ValueError("distances and overlaps must have the same shape")
    m, n = d.shape
    if m == 0 or n == 0:
        raise ValueError("every null region needs at least one candidate")
    rhos = np.asarray(rhos, dtype=float)
    first = np.argmin(d, axis=1)
    best = o[np.arange(m), first]
    correct = np.array([int(np.sum(best >= r)) for r in rhos], dtype=np.int64)
    return MatchingScore(rhos, correct / m, correct, first, m)


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Everything computed for one or more shape pairs."""

    repeatability: RepeatabilityCurve
    roc: RocCurve | None = None
    matching: MatchingScore | None = None
