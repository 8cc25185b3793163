"""Synthetic meshes for tests, demos and sanity checks."""

import numpy as np

from .mesh import TriangleMesh


def icosahedron(radius=1.0):
    """Regular icosahedron inscribed in a sphere of the given radius."""
    g = (1.0 + np.sqrt(5.0)) / 2.0
    v = np.array(
        [
            [-1, g, 0], [1, g, 0], [-1, -g, 0], [1, -g, 0],
            [0, -1, g], [0, 1, g], [0, -1, -g], [0, 1, -g],
            [g, 0, -1], [g, 0, 1], [-g, 0, -1], [-g, 0, 1],
        ],
        dtype=float,
    )
    f = np.array(
        [
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ]
    )
    v *= radius / np.linalg.norm(v[0])
    return TriangleMesh(v, f)


def geodesic_sphere(frequency, radius=1.0):
    """Icosahedral geodesic sphere with ``10 * frequency**2 + 2`` vertices.

    Every icosahedron face is split into ``frequency**2`` triangles and the
    new vertices are projected onto the sphere.  ``frequency = 2**level``
    reproduces the usual recursively subdivided icosphere (level 4 has 2562
    vertices).
    """
    if frequency < 1:
        raise ValueError("frequency must be >= 1")
    base = icosahedron(1.0)
    n = int(frequency)
    index = {}
    positions = []

    def vertex(key, p):
        if key not in index:
            index[key] = len(positions)
            positions.append(p)
        return index[key]

    faces = []
    bv = base.positions
    for a, b, c in base.faces.tolist():
        ids = {}
        for i in range(n + 1):
            for j in range(n + 1 - i):
                k = n - i - j
                # shared edge/corner points get the same key from either face
                weights = {a: k, b: i, c: j}
                key = tuple(sorted((vid, w) for vid, w in weights.items() if w))
                p = (k * bv[a] + i * bv[b] + j * bv[c]) / n
                ids[i, j] = vertex(key, p)
        for i in range(n):
            for j in range(n - i):
                faces.append([ids[i, j], ids[i + 1, j], ids[i, j + 1]])
                if i + j < n - 1:
                    faces.append([ids[i + 1, j], ids[i + 1, j + 1], ids[i, j + 1]])
    p = np.array(positions)
    p *= radius / np.linalg.norm(p, axis=1, keepdims=True)
    return TriangleMesh(p, faces)


def grid(nx, ny, spacing=1.0):
    """Flat triangulated ``nx`` by ``ny`` vertex grid in the z = 0 plane.

    Vertex ``(x, y)`` has index ``y * nx + x``.
    """
    xs, ys = np.meshgrid(np.arange(nx), np.arange(ny))
    p = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(nx * ny)]) * spacing
    faces = []
    for y in range(ny - 1):
        for x in range(nx - 1):
            v = y * nx + x
            faces.append([v, v + 1, v + nx + 1])
            faces.append([v, v + nx + 1, v + nx])
    return TriangleMesh(p, faces)


def blob(frequency=22, radius=100.0, seed=0, n_bumps=6, height=0.6, width=0.35):
    """Sphere with Gaussian protrusions, a cheap stand-in for an articulated shape.

    Bump directions and heights are drawn from ``seed``, so the surface has no
    exact symmetries.
    """
    sphere = geodesic_sphere(frequency, 1.0)
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(n_bumps, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    heights = height * rng.uniform(0.5, 1.0, size=n_bumps)
    u = sphere.positions
    r = np.ones(len(u))
    for d, h in zip(dirs, heights):
        ang = np.arccos(np.clip(u @ d, -1.0, 1.0))
        r += h * np.exp(-((ang / width) ** 2))
    return TriangleMesh(u * (radius * r)[:, None], sphere.faces)


def random_rotation(rng):
    """Uniformly distributed 3D rotation matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
