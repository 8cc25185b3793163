"""Cotangent discretization of the Laplace-Beltrami operator.

The operator is represented by the pair ``(W, A)`` such that
``Laplacian = A^-1 W``: ``W`` is the symmetric cotangent stiffness matrix and
``A`` the diagonal (lumped) mass matrix of vertex area elements.
"""

import numpy as np
from scipy import sparse

from .mesh import vertex_areas


class SingularMassError(ValueError):
    """Raised when a vertex has zero area element."""


def _corner_cotangents(mesh):
    """Cotangent of the angle at each corner, shape=[F, 3].

    Column ``c`` holds the angle at ``faces[:, c]``, which is opposite the edge
    joining the two other corners.
    """
    p = mesh.positions
    f = mesh.faces
    cot = np.empty(f.shape)
    for c in range(3):
        o = p[f[:, c]]
        u = p[f[:, (c + 1) % 3]] - o
        v = p[f[:, (c + 2) % 3]] - o
        dot = np.einsum("ij,ij->i", u, v)
        cross = np.linalg.norm(np.cross(u, v), axis=1)
        cot[:, c] = dot / cross
    return cot


def cotangent_stiffness(mesh):
    """Cotangent stiffness matrix ``W``.

    Off-diagonal entries are ``-(cot a_ij + cot b_ij) / 2`` where ``a_ij`` and
    ``b_ij`` are the angles opposite edge ``(i, j)``.  A boundary edge has a
    single opposite angle and receives ``-cot a_ij / 2``.  Obtuse angles give
    negative cotangents; they are kept as is.  The diagonal is the negated row
    sum, so ``W @ 1 == 0``.

    Parameters
    ----------
    mesh : TriangleMesh

    Returns
    -------
    W : scipy.sparse.csr_matrix, shape=[N, N]
    """
    n = mesh.n_vertices
    f = mesh.faces
    cot = _corner_cotangents(mesh)
    rows = []
    cols = []
    vals = []
    for c in range(3):
        i = f[:, (c + 1) % 3]
        j = f[:, (c + 2) % 3]
        w = 0.5 * cot[:, c]
        rows += [i, j]
        cols += [j, i]
        vals += [-w, -w]
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    off = sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    W = (off + sparse.diags(diag)).tocsr()
    W.sum_duplicates()
    W.sort_indices()
    return W


def mass_matrix(areas):
    """Diagonal mass matrix ``A = diag(da)``.

    Parameters
    ----------
    areas : array_like, shape=[N]
        Vertex area elements, e.g. from :func:`diffmser.mesh.vertex_areas`.

    Raises
    ------
    SingularMassError
        If any vertex has a non-positive area element.
    """
    da = np.asarray(areas, dtype=float)
    bad = np.flatnonzero(~(da > 0))
    if bad.size:
        raise SingularMassError(
            f"vertex {bad[0]} has area element {da[bad[0]]!r}; "
            f"{bad.size} vertex/vertices are not covered by any face"
        )
    return sparse.diags(da).tocsr()


def laplacian_pair(mesh):
    """Return ``(W, A, da)`` for a mesh."""
    da = vertex_areas(mesh)
    return cotangent_stiffness(mesh), mass_matrix(da), da


def write_coo(matrix, path):
    """Dump a sparse matrix as ``row col value`` text lines, row-major."""
    m = sparse.coo_matrix(matrix)
    order = np.lexsort((m.col, m.row))
    with open(path, "w", encoding="utf-8") as fh:
        for r, c, v in zip(m.row[order].tolist(), m.col[order].tolist(), m.data[order].tolist()):
            fh.write(f"{r} {c} {v!r}\n")
