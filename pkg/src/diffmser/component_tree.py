"""Component trees of vertex- and edge-weighted graphs.

The ``l``-cross-section of a weighted graph keeps the edges whose level is at
most ``l``.  An edge's level is its weight (edge-weighted graphs) or the larger
weight of its endpoints (vertex-weighted graphs).  In a vertex-weighted graph
every vertex with ``f(v) <= l`` is also present as (at least) a singleton
component; in an edge-weighted graph a vertex is present once one of its edges
is.  Each connected component of a cross-section becomes a tree node whose
altitude is the lowest level at which that exact vertex set is a component.

Construction is a Kruskal-style sweep over the levels with a union-find
structure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class WeightedGraph:
    """Undirected graph carrying either vertex weights or edge weights.

    Parameters
    ----------
    n_vertices : int
    edges : array_like, shape=[E, 2]
        Undirected edges; each unordered pair may appear only once.
    vertex_weights : array_like, shape=[N], optional
    edge_weights : array_like, shape=[E], optional
        Exactly one of the two weightings must be given.  Weights must be
        finite and non-negative.
    areas : array_like, shape=[N], optional
        Vertex area elements; unit areas (cardinality) by default.
    """

    def __init__(self, n_vertices, edges, vertex_weights=None, edge_weights=None, areas=None):
        n = int(n_vertices)
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if (vertex_weights is None) == (edge_weights is None):
            raise ValueError("exactly one of vertex_weights and edge_weights must be given")
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ValueError("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self-loops are not allowed")
        key = np.sort(edges, axis=1)
        if len(np.unique(key, axis=0)) != len(key):
            raise ValueError("duplicate undirected edge")

        weights = vertex_weights if vertex_weights is not None else edge_weights
        weights = np.asarray(weights, dtype=float)
        expected = n if vertex_weights is not None else len(edges)
        if weights.shape != (expected,):
            raise ValueError(f"expected {expected} weights, got shape {weights.shape}")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("weights must be finite and non-negative")

        self.n_vertices = n
        self.edges = edges
        self.vertex_weighted = vertex_weights is not None
        self.weights = weights
        self.areas = np.ones(n) if areas is None else np.asarray(areas, dtype=float)
        if self.areas.shape != (n,):
            raise ValueError("areas must have one entry per vertex")

    def levels(self):
        """Entry level of every vertex and every edge.

        Vertices that never enter (edge-weighted graphs, no incident edge)
        get ``inf``.
        """
        u, v = self.edges.T
        if self.vertex_weighted:
            vertex_level = self.weights.copy()
            edge_level = np.maximum(self.weights[u], self.weights[v])
        else:
            edge_level = self.weights.copy()
            vertex_level = np.full(self.n_vertices, np.inf)
            np.minimum.at(vertex_level, u, edge_level)
            np.minimum.at(vertex_level, v, edge_level)
        return vertex_level, edge_level


@dataclass(frozen=True, eq=False)
class ComponentTree:
    """Component tree (a forest if the graph is disconnected).

    Nodes are numbered so that children precede their parents; nodes of the
    same altitude are ordered by their smallest member vertex.

    Attributes
    ----------
    altitude, area : ndarray, shape=[M]
    size : ndarray, shape=[M]
        Number of member vertices.
    parent : ndarray, shape=[M]
        Parent node id, ``-1`` for roots.
    children : tuple of ndarray
    own_vertices : tuple of ndarray
        Vertices whose first component is this node; a node's member set is
        the union of its own vertices and those of its descendants.
    """

    altitude: np.ndarray
    area: np.ndarray
    size: np.ndarray
    parent: np.ndarray
    children: tuple
    own_vertices: tuple
    n_vertices: int

    def __len__(self):
        return len(self.altitude)

    @property
    def roots(self):
        return np.flatnonzero(self.parent < 0)

    @property
    def total_area(self):
        """Area of all vertices covered by the tree."""
        return float(self.area[self.roots].sum())

    def vertices(self, node):
        """Sorted member vertices of ``node``."""
        stack = [int(node)]
        out = []
        while stack:
            c = stack.pop()
            out.append(self.own_vertices[c])
            stack.extend(self.children[c].tolist())
        return np.sort(np.concatenate(out))

    def ancestors(self, node):
        node = int(self.parent[node])
        while node >= 0:
            yield node
            node = int(self.parent[node])

    def main_child(self, node):
        """Child with the largest area (lowest id on ties), or ``-1`` for a leaf."""
        ch = self.children[node]
        if len(ch) == 0:
            return -1
        return int(ch[np.argmax(self.area[ch])])

    def dump(self, path):
        """Write ``id parent altitude area size`` lines."""
        with open(path, "w", encoding="utf-8") as fh:
            for i in range(len(self)):
                fh.write(
                    f"{i} {int(self.parent[i])} {float(self.altitude[i])!r} "
                    f"{float(self.area[i])!r} {int(self.size[i])}\n"
                )


def _find(uf, x):
    root = x
    while uf[root] != root:
        root = uf[root]
    while uf[x] != root:
        uf[x], x = root, uf[x]
    return root


def build_tree(graph):
    """Build the component tree of a weighted graph.

    Parameters
    ----------
    graph : WeightedGraph

    Returns
    -------
    ComponentTree
        Empty if the graph has no vertex that ever enters.
    """
    n = graph.n_vertices
    vertex_level, edge_level = graph.levels()
    areas = graph.areas.tolist()
    edges = graph.edges.tolist()

    entering = np.flatnonzero(np.isfinite(vertex_level))
    # events sorted by level; vertices before edges at equal level, then by index
    ev_level = np.concatenate([vertex_level[entering], edge_level])
    ev_kind = np.concatenate([np.zeros(len(entering), int), np.ones(len(edge_level), int)])
    ev_index = np.concatenate([entering, np.arange(len(edge_level))])
    order = np.lexsort((ev_index, ev_kind, ev_level))
    ev_level = ev_level[order].tolist()
    ev_kind = ev_kind[order].tolist()
    ev_index = ev_index[order].tolist()

    uf = list(range(n))
    rank = [0] * n
    node_of = [-1] * n
    min_vertex = list(range(n))

    altitude, area, size, parent, children, own = [], [], [], [], [], []

    e = 0
    n_events = len(ev_level)
    while e < n_events:
        level = ev_level[e]
        # root -> [child nodes, own vertices, changed]
        pending = {}
        while e < n_events and ev_level[e] == level:
            idx = ev_index[e]
            if ev_kind[e] == 0:
                pending[idx] = [[], [idx], True]
            else:
                a, b = edges[idx]
                ra, rb = _find(uf, a), _find(uf, b)
                if ra != rb:
                    for r in (ra, rb):
                        if r not in pending:
                            pending[r] = [[node_of[r]], [], False]
                    if rank[ra] < rank[rb]:
                        ra, rb = rb, ra
                    uf[rb] = ra
                    if rank[ra] == rank[rb]:
                        rank[ra] += 1
                    min_vertex[ra] = min(min_vertex[ra], min_vertex[rb])
                    keep, gone = pending[ra], pending.pop(rb)
                    keep[0].extend(gone[0])
                    keep[1].extend(gone[1])
                    keep[2] = True
            e += 1

        for r in sorted(pending, key=min_vertex.__getitem__):
            ch, verts, changed = pending[r]
            if not changed:
                continue
            nid = len(altitude)
            ch = sorted(ch)
            for c in ch:
                parent[c] = nid
            altitude.append(level)
            area.append(sum(area[c] for c in ch) + sum(areas[v] for v in verts))
            size.append(sum(size[c] for c in ch) + len(verts))
            parent.append(-1)
            children.append(np.array(ch, dtype=np.int64))
            own.append(np.array(sorted(verts), dtype=np.int64))
            node_of[r] = nid

    return ComponentTree(
        altitude=np.array(altitude, dtype=float),
        area=np.array(area, dtype=float),
        size=np.array(size, dtype=np.int64),
        parent=np.array(parent, dtype=np.int64),
        children=tuple(children),
        own_vertices=tuple(own),
        n_vertices=n,
    )


def node_area(tree, node):
    """Area ``sum(da(v) for v in node)`` of a tree node."""
    return float(tree.area[node])
