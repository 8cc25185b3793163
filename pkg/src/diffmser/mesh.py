"""Triangle meshes: loading, validation, adjacency and vertex area elements."""

from __future__ import annotations

import hashlib
import os
import warnings
from functools import cached_property

import numpy as np
from scipy import sparse

# faces whose area is below this fraction of their longest squared edge are degenerate
_DEGENERATE_RTOL = 1e-12


class MeshError(ValueError):
    """Raised when a mesh file cannot be parsed or violates mesh invariants."""


class DegenerateFaceError(MeshError):
    """Raised for faces with a repeated vertex or zero area.

    Attributes
    ----------
    faces : list of int
        Indices (in file order) of the offending faces.
    """

    def __init__(self, faces, reason="degenerate"):
        self.faces = list(faces)
        shown = ", ".join(str(f) for f in self.faces[:20])
        more = "" if len(self.faces) <= 20 else f" (+{len(self.faces) - 20} more)"
        super().__init__(f"{reason} face(s): {shown}{more}")


class IndexRangeError(MeshError):
    """Raised when a face references a vertex index outside [0, N)."""


class TriangleMesh:
    """Immutable triangle mesh.

    Parameters
    ----------
    positions : array_like, shape=[N, 3]
        Vertex coordinates.
    faces : array_like, shape=[F, 3]
        Vertex indices of each triangle.

    Raises
    ------
    IndexRangeError
        If a face index is outside ``[0, N)``.
    DegenerateFaceError
        If a face repeats a vertex or has zero area.
    """

    def __init__(self, positions, faces):
        positions = np.array(positions, dtype=np.float64)
        faces = np.array(faces, dtype=np.int64)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise MeshError(f"positions must have shape (N, 3), got {positions.shape}")
        if faces.size == 0:
            faces = faces.reshape(0, 3)
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise MeshError(f"faces must have shape (F, 3), got {faces.shape}")
        if not np.all(np.isfinite(positions)):
            raise MeshError("positions contain non-finite values")

        n = len(positions)
        bad = np.flatnonzero(np.any((faces < 0) | (faces >= n), axis=1))
        if bad.size:
            f = faces[bad[0]]
            raise IndexRangeError(
                f"face {bad[0]} = {f.tolist()} references a vertex outside [0, {n})"
            )

        repeated = np.flatnonzero(
            (faces[:, 0] == faces[:, 1])
            | (faces[:, 1] == faces[:, 2])
            | (faces[:, 0] == faces[:, 2])
        )
        if repeated.size:
            raise DegenerateFaceError(repeated, "repeated-vertex")

        key = np.sort(faces, axis=1)
        _, first = np.unique(key, axis=0, return_index=True)
        if len(first) < len(faces):
            keep = np.sort(first)
            warnings.warn(
                f"dropped {len(faces) - len(keep)} duplicate face(s)", stacklevel=2
            )
            faces = faces[keep]

        self._positions = positions
        self._faces = faces
        self._positions.setflags(write=False)
        self._faces.setflags(write=False)

        areas = self.face_areas
        e = positions[faces[:, [1, 2, 0]]] - positions[faces]
        longest = np.max(np.einsum("fij,fij->fi", e, e), axis=1)
        zero = np.flatnonzero(areas <= _DEGENERATE_RTOL * longest)
        if zero.size:
            raise DegenerateFaceError(zero, "zero-area")

    @property
    def positions(self):
        return self._positions

    @property
    def faces(self):
        return self._faces

    @property
    def n_vertices(self):
        return len(self._positions)

    @property
    def n_faces(self):
        return len(self._faces)

    @cached_property
    def edges(self):
        """Undirected edges as sorted ``(i, j)`` pairs with ``i < j``, shape=[E, 2]."""
        f = self._faces
        e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
        e = np.sort(e, axis=1)
        e = np.unique(e, axis=0) if len(e) else e.reshape(0, 2)
        e.setflags(write=False)
        return e

    @cached_property
    def face_areas(self):
        p = self._positions
        f = self._faces
        cross = np.cross(p[f[:, 1]] - p[f[:, 0]], p[f[:, 2]] - p[f[:, 0]])
        a = 0.5 * np.linalg.norm(cross, axis=1)
        a.setflags(write=False)
        return a

    @cached_property
    def content_hash(self):
        """Hex SHA-256 of the vertex positions and faces."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self._positions, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self._faces, dtype="<i8").tobytes())
        return h.hexdigest()

    def transformed(self, rotation=None, translation=None, scale=1.0, permutation=None):
        """Return a rigidly moved, scaled and/or re-indexed copy.

        ``permutation[i]`` is the old index of new vertex ``i``.
        """
        p = self._positions * scale
        if rotation is not None:
            p = p @ np.asarray(rotation).T
        if translation is not None:
            p = p + np.asarray(translation)
        f = self._faces
        if permutation is not None:
            permutation = np.asarray(permutation)
            inverse = np.empty_like(permutation)
            inverse[permutation] = np.arange(len(permutation))
            p = p[permutation]
            f = inverse[f]
        return TriangleMesh(p, f)

    def __repr__(self):
        return f"TriangleMesh(n_vertices={self.n_vertices}, n_faces={self.n_faces})"


def vertex_areas(mesh):
    """Barycentric area element of every vertex.

    Each triangle contributes a third of its area to each of its corners, so
    the areas sum to the total surface area.

    Parameters
    ----------
    mesh : TriangleMesh

    Returns
    -------
    da : ndarray, shape=[N]
    """
    da = np.zeros(mesh.n_vertices)
    third = mesh.face_areas / 3.0
    for c in range(3):
        np.add.at(da, mesh.faces[:, c], third)
    isolated = np.flatnonzero(da == 0)
    if isolated.size:
        warnings.warn(
            f"{isolated.size} vertex/vertices belong to no face "
            f"(first: {isolated[0]}); their area is 0",
            stacklevel=2,
        )
    return da


def adjacency_matrix(mesh):
    """Symmetric 0/1 adjacency as a CSR matrix."""
    n = mesh.n_vertices
    i, j = mesh.edges.T
    data = np.ones(2 * len(i))
    adj = sparse.coo_matrix(
        (data, (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(n, n)
    ).tocsr()
    adj.sort_indices()
    return adj


def adjacency(mesh):
    """Per-vertex neighbor lists, each sorted by vertex index."""
    adj = adjacency_matrix(mesh)
    return [adj.indices[adj.indptr[v] : adj.indptr[v + 1]].copy() for v in range(mesh.n_vertices)]


def _data_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                yield line


def read_off(path):
    """Read an ASCII OFF file into a :class:`TriangleMesh`."""
    lines = _data_lines(path)
    try:
        header = next(lines)
    except StopIteration:
        raise MeshError(f"{path}: empty file") from None
    tokens = header.split()
    if not tokens[0].endswith("OFF"):
        raise MeshError(f"{path}: missing OFF header")
    if tokens[0] != "OFF":
        raise MeshError(f"{path}: unsupported OFF variant {tokens[0]!r}")
    tokens = tokens[1:]
    try:
        if not tokens:
            tokens = next(lines).split()
        n_verts, n_faces = int(tokens[0]), int(tokens[1])
    except (StopIteration, ValueError, IndexError):
        raise MeshError(f"{path}: malformed OFF counts line") from None

    try:
        positions = [[float(x) for x in next(lines).split()[:3]] for _ in range(n_verts)]
    except (StopIteration, ValueError):
        raise MeshError(f"{path}: malformed or truncated vertex block") from None
    if any(len(p) != 3 for p in positions):
        raise MeshError(f"{path}: vertex with fewer than 3 coordinates")

    faces = []
    for k in range(n_faces):
        try:
            row = [int(x) for x in next(lines).split()]
        except (StopIteration, ValueError):
            raise MeshError(f"{path}: malformed or truncated face block at face {k}") from None
        if not row or row[0] != 3 or len(row) < 4:
            raise MeshError(f"{path}: face {k} is not a triangle")
        faces.append(row[1:4])
    return TriangleMesh(np.reshape(positions, (-1, 3)), np.reshape(faces, (-1, 3)))


def read_obj(path):
    """Read the vertices and triangular faces of an ASCII OBJ file.

    Normals, texture coordinates, groups and materials are ignored.
    """
    positions = []
    faces = []
    for lineno, line in enumerate(_data_lines(path), start=1):
        tokens = line.split()
        tag = tokens[0]
        if tag == "v":
            try:
                positions.append([float(x) for x in tokens[1:4]])
            except ValueError:
                raise MeshError(f"{path}:{lineno}: malformed vertex") from None
            if len(positions[-1]) != 3:
                raise MeshError(f"{path}:{lineno}: vertex with fewer than 3 coordinates")
        elif tag == "f":
            if len(tokens) != 4:
                raise MeshError(f"{path}:{lineno}: face is not a triangle")
            face = []
            for tok in tokens[1:]:
                try:
                    idx = int(tok.split("/")[0])
                except ValueError:
                    raise MeshError(f"{path}:{lineno}: malformed face index {tok!r}") from None
                # OBJ indices are 1-based; negative values count back from the last vertex
                face.append(idx - 1 if idx > 0 else len(positions) + idx)
            faces.append(face)
    return TriangleMesh(np.reshape(positions, (-1, 3)), np.reshape(faces, (-1, 3)))


def load_mesh(path, format=None):
    """Load a mesh from an OFF or OBJ file.

    Parameters
    ----------
    path : str or os.PathLike
    format : {"OFF", "OBJ"}, optional
        Inferred from the file extension when omitted.
    """
    path = os.fspath(path)
    if format is None:
        format = os.path.splitext(path)[1].lstrip(".")
    format = format.upper()
    if format == "OFF":
        return read_off(path)
    if format == "OBJ":
        return read_obj(path)
    raise MeshError(f"unsupported mesh format {format!r} (expected OFF or OBJ)")


def write_off(mesh, path):
    """Write a mesh as ASCII OFF with round-trip exact coordinates."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("OFF\n")
        fh.write(f"{mesh.n_vertices} {mesh.n_faces} {len(mesh.edges)}\n")
        for x, y, z in mesh.positions.tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")
        for a, b, c in mesh.faces.tolist():
            fh.write(f"3 {a} {b} {c}\n")
