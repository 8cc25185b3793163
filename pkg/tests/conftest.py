import numpy as np
import pytest
import scipy.sparse as sp

from diffmser import shapes
from diffmser.laplacian import laplacian_pair
from diffmser.mesh import TriangleMesh
from diffmser.spectral import eigenpairs, mesh_eigenpairs

SQRT3 = np.sqrt(3.0)


@pytest.fixture
def triangle():
    """Equilateral triangle with unit sides."""
    return TriangleMesh([[0, 0, 0], [1, 0, 0], [0.5, SQRT3 / 2, 0]], [[0, 1, 2]])


@pytest.fixture
def rhombus():
    """Two equilateral triangles sharing the edge (1, 2)."""
    pos = [[0, 0, 0], [1, 0, 0], [0.5, SQRT3 / 2, 0], [1.5, SQRT3 / 2, 0]]
    return TriangleMesh(pos, [[0, 1, 2], [1, 3, 2]])


@pytest.fixture
def chain_basis():
    """Full basis of the two-vertex chain W = [[1, -1], [-1, 1]], A = I."""
    W = sp.csr_matrix(np.array([[1.0, -1.0], [-1.0, 1.0]]))
    return eigenpairs(W, np.ones(2), 2)


@pytest.fixture(scope="session")
def small_sphere():
    """42-vertex geodesic sphere with its full eigenbasis."""
    mesh = shapes.geodesic_sphere(2)
    W, A, _ = laplacian_pair(mesh)
    return mesh, W, eigenpairs(W, A, mesh.n_vertices)


@pytest.fixture(scope="session")
def blob_mesh():
    return shapes.blob(frequency=10, seed=3)


@pytest.fixture(scope="session")
def blob_basis(blob_mesh):
    return mesh_eigenpairs(blob_mesh, 60)
