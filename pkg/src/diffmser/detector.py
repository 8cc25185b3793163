"""Maximally stable component detection on a component tree.

The instability of a node is the finite-difference derivative of component
area with respect to altitude along its branch.  A node's branch runs down
through its largest child and up through its parent.  Maximally stable
components are the local minima of instability along branches.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class DetectorParams:
    """Region filtering parameters.

    Attributes
    ----------
    max_instability : float
        Regions with a higher score are discarded (``inf`` keeps all).
    overlap_dedup : float or None
        Of two nested regions whose area ratio (smaller over larger) exceeds
        this value only the larger is kept.  ``None`` disables deduplication.
    min_region_frac, max_region_frac : float
        Bounds on region area as fractions of the total area.
    """

    max_instability: float = math.inf
    overlap_dedup: float | None = 0.8
    min_region_frac: float = 0.005
    max_region_frac: float = 0.5

    def __post_init__(self):
        if math.isnan(self.max_instability):
            raise ValueError("max_instability must not be NaN")
        if self.overlap_dedup is not None and not 0.0 <= self.overlap_dedup <= 1.0:
            raise ValueError("overlap_dedup must be in [0, 1] or None")
        if not 0.0 <= self.min_region_frac <= self.max_region_frac <= 1.0:
            raise ValueError("need 0 <= min_region_frac <= max_region_frac <= 1")


@dataclass(frozen=True, eq=False)
class StableRegion:
    """A detected maximally stable component."""

    vertices: np.ndarray
    altitude: float
    score: float
    area: float
    node: int = field(default=-1)

    def to_dict(self):
        return {
            "vertices": [int(v) for v in self.vertices],
            "altitude": float(self.altitude),
            "score": float(self.score),
            "area": float(self.area),
        }


def instability_scores(tree):
    """Finite-difference instability ``dA / dl`` of every node.

    Interior nodes use the central difference between their largest child
    and their parent; leaves and roots use one-sided differences.  A node
    with neither parent nor children cannot be scored and gets ``nan``.

    Returns
    -------
    ndarray, shape=[M]
    """
    m = len(tree)
    scores = np.full(m, np.nan)
    alt = tree.altitude
    area = tree.area
    for node in range(m):
        p = int(tree.parent[node])
        c = tree.main_child(node)
        lo = c if c >= 0 else node
        hi = p if p >= 0 else node
        if lo == hi:
            continue
        scores[node] = (area[hi] - area[lo]) / (alt[hi] - alt[lo])
    return scores


def local_minima(tree, scores):
    """Nodes at a strict or plateau local minimum of ``scores`` along their branch.

    A run of equal scores counts as one minimum, represented by its topmost
    (largest) node.
    """
    out = []
    for node in range(len(tree)):
        s = scores[node]
        if np.isnan(s):
            continue
        p = int(tree.parent[node])
        if p >= 0 and not np.isnan(scores[p]) and scores[p] <= s:
            continue
        bottom = node
        c = tree.main_child(bottom)
        while c >= 0 and scores[c] == s:
            bottom = c
            c = tree.main_child(bottom)
        if c >= 0 and not np.isnan(scores[c]) and scores[c] <= s:
            continue
        out.append(node)
    return out


def dedup_regions(regions, threshold):
    """Drop every region nested in a larger kept one with area ratio above ``threshold``.

    Regions are visited largest first, so the result is idempotent.
    """
    if threshold is None:
        return list(regions)
    order = sorted(regions, key=lambda r: (-r.area, r.score, r.node))
    kept = []
    kept_sets = []
    for r in order:
        members = set(r.vertices.tolist())
        nested = any(
            k.area > 0 and r.area / k.area > threshold and members <= ks
            for k, ks in zip(kept, kept_sets)
        )
        if not nested:
            kept.append(r)
            kept_sets.append(members)
    return kept


def detect(tree, params=None, total_area=None, scores=None):
    """Detect maximally stable regions.

    Parameters
    ----------
    tree : ComponentTree
    params : DetectorParams, optional
    total_area : float, optional
        Reference area for the size bounds; defaults to the tree's total area.
    scores : ndarray, optional
        Precomputed :func:`instability_scores`.

    Returns
    -------
    list of StableRegion
        Sorted by ascending score, then node id.
    """
    params = params or DetectorParams()
    if len(tree) == 0:
        return []
    if scores is None:
        scores = instability_scores(tree)
    if total_area is None:
        total_area = tree.total_area
    lo = params.min_region_frac * total_area
    hi = params.max_region_frac * total_area

    regions = []
    for node in local_minima(tree, scores):
        s = float(scores[node])
        a = float(tree.area[node])
        if s > params.max_instability or not lo <= a <= hi:
            continue
        regions.append(
            StableRegion(
                vertices=tree.vertices(node),
                altitude=float(tree.altitude[node]),
                score=s,
                area=a,
                node=node,
            )
        )
    regions = dedup_regions(regions, params.overlap_dedup)
    regions.sort(key=lambda r: (r.score, r.node))
    return regions
