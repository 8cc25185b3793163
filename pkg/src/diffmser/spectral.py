"""Generalized eigendecomposition of the Laplacian and diffusion kernels.

All kernels are evaluated from a truncated eigenbasis ``(lambda_i, phi_i)``
of ``W phi = lambda A phi``:

* heat kernel ``h_t(x, y) = sum_i exp(-lambda_i t) phi_i(x) phi_i(y)``
* commute-time kernel ``c(x, y) = sum_{i>=1} phi_i(x) phi_i(y) / lambda_i``
* diffusion distance, the L2(A) distance between heat kernel rows
* the scale-invariant modified heat kernel: log-sampled in time, log,
  derivative in log-time, DFT magnitude.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .errors import DataMismatchError, EigensolverError, NumericalError
from .laplacian import cotangent_stiffness, laplacian_pair

CACHE_FORMAT = "diffmser-spectrum"
CACHE_VERSION = 1

# full dense solve below this many vertices
DENSE_MAX_VERTICES = 600

ORTHONORMALITY_TOL = 1e-6
RESIDUAL_TOL = 1e-6


class KernelDomainError(NumericalError, ValueError):
    """A kernel value lies outside the domain required by a transform."""


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """The ``k`` smallest generalized eigenpairs of a Laplacian pair.

    Attributes
    ----------
    eigenvalues : ndarray, shape=[k]
        Ascending eigenvalues (units of inverse squared length).
    eigenvectors : ndarray, shape=[N, k]
        A-orthonormal eigenvectors as columns.
    areas : ndarray, shape=[N]
        Diagonal of the mass matrix.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    areas: np.ndarray

    def __post_init__(self):
        for name in ("eigenvalues", "eigenvectors", "areas"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.eigenvectors.ndim != 2:
            raise ValueError("eigenvectors must be a 2-D array")
        n, k = self.eigenvectors.shape
        if self.eigenvalues.shape != (k,) or self.areas.shape != (n,):
            raise ValueError(
                f"inconsistent shapes: eigenvalues {self.eigenvalues.shape}, "
                f"eigenvectors {self.eigenvectors.shape}, areas {self.areas.shape}"
            )

    @property
    def k(self):
        return len(self.eigenvalues)

    @property
    def n_vertices(self):
        return self.eigenvectors.shape[0]

    @property
    def total_area(self):
        return float(self.areas.sum())

    def truncated(self, k):
        """Basis restricted to the first ``k`` eigenpairs."""
        return SpectralBasis(self.eigenvalues[:k], self.eigenvectors[:, :k], self.areas)

    def zero_tolerance(self):
        return 1e-6 * max(abs(self.eigenvalues[-1]), np.finfo(float).tiny)

    def validate(self, W=None):
        """Check the basis invariants, raising :class:`EigensolverError` on failure.

        Ascending order, a near-zero first eigenvalue and A-orthonormality are
        always checked; the eigen-residual only when ``W`` is given.
        """
        lam = self.eigenvalues
        phi = self.eigenvectors
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(phi))):
            raise EigensolverError("basis contains non-finite values")
        if np.any(np.diff(lam) < 0):
            raise EigensolverError("eigenvalues are not ascending")
        tol = self.zero_tolerance()
        if self.k > 1 and abs(lam[0]) > tol:
            raise EigensolverError(f"first eigenvalue {lam[0]!r} is not zero within {tol:.3e}")
        gram = phi.T @ (self.areas[:, None] * phi)
        err = np.max(np.abs(gram - np.eye(self.k)))
        if err > ORTHONORMALITY_TOL:
            raise EigensolverError(f"eigenvectors are not A-orthonormal (max deviation {err:.3e})")
        if W is not None:
            res = relative_residuals(W, self)
            if res.max() > RESIDUAL_TOL:
                raise EigensolverError("eigen-residual check failed", residual=float(res.max()))
        return self


def relative_residuals(W, basis):
    """Per-column ``||W phi - lambda A phi|| / (||W|| ||phi||)``."""
    phi = basis.eigenvectors
    r = W @ phi - basis.areas[:, None] * phi * basis.eigenvalues
    w_norm = splinalg.norm(W, ord=np.inf) if sparse.issparse(W) else np.linalg.norm(W, ord=np.inf)
    scale = max(w_norm, np.finfo(float).tiny) * np.linalg.norm(phi, axis=0)
    return np.linalg.norm(r, axis=0) / scale


def _fix_signs(phi):
    # first clearly nonzero component of every column made positive
    mag = np.abs(phi)
    first = np.argmax(mag > 1e-6 * mag.max(axis=0), axis=0)
    signs = np.sign(phi[first, np.arange(phi.shape[1])])
    signs[signs == 0] = 1.0
    return phi * signs


def _rayleigh_ritz(W, areas, phi):
    # re-solve inside span(phi): exact A-orthonormality, diagonal projected W
    Aphi = areas[:, None] * phi
    gram = phi.T @ Aphi
    stiff = phi.T @ (W @ phi)
    stiff = 0.5 * (stiff + stiff.T)
    gram = 0.5 * (gram + gram.T)
    lam, rot = scipy.linalg.eigh(stiff, gram)
    return lam, phi @ rot


def eigenpairs(W, A, k, seed=0, maxiter=None):
    """Solve ``W Phi = A Phi Lambda`` for the ``k`` smallest eigenpairs.

    Small problems are solved densely; larger ones with shift-invert Lanczos
    (ARPACK) around a small negative shift, which keeps ``W - sigma A``
    positive definite.  The starting vector is drawn from ``seed`` so the
    result is deterministic.

    Parameters
    ----------
    W : sparse matrix, shape=[N, N]
        Symmetric positive semidefinite stiffness matrix.
    A : sparse matrix or array_like
        Diagonal mass matrix (or its diagonal).
    k : int
        Number of eigenpairs, ``1 <= k <= N``.
    seed : int
    maxiter : int, optional
        Iteration budget of the iterative solver.

    Returns
    -------
    SpectralBasis

    Raises
    ------
    ValueError
        If ``k`` is outside ``[1, N]``.
    EigensolverError
        If the solver does not converge or the result fails validation.
    """
    areas = np.asarray(A.diagonal() if sparse.issparse(A) else np.asarray(A)).astype(float)
    if areas.ndim == 2:
        areas = np.diag(areas)
    n = len(areas)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if np.any(areas <= 0):
        raise ValueError("mass matrix must be positive definite")
    W = sparse.csr_matrix(W, dtype=float)

    if n <= DENSE_MAX_VERTICES or k >= n - 1:
        lam, phi = scipy.linalg.eigh(W.toarray(), np.diag(areas), subset_by_index=[0, k - 1])
    else:
        sigma = -1e-2 / areas.sum()
        v0 = np.random.default_rng(seed).standard_normal(n)
        try:
            lam, phi = splinalg.eigsh(
                W, k=k, M=sparse.diags(areas).tocsc(), sigma=sigma, which="LM",
                v0=v0, maxiter=maxiter,
            )
        except splinalg.ArpackNoConvergence as exc:
            partial = exc.eigenvectors
            residual = None
            if partial is not None and partial.size:
                b = SpectralBasis(exc.eigenvalues, partial, areas)
                residual = float(relative_residuals(W, b).max())
            raise EigensolverError(
                f"ARPACK did not converge for k={k} within maxiter={maxiter}", residual
            ) from exc
        lam, phi = _rayleigh_ritz(W, areas, phi)

    order = np.argsort(lam, kind="stable")
    basis = SpectralBasis(lam[order], _fix_signs(phi[:, order]), areas)
    return basis.validate(W)


def log_time_grid(first_exponent=1, last_exponent=25, per_octave=16):
    """Times ``2**(first + m / per_octave)`` up to ``2**last`` inclusive.

    The default is the 385-sample grid ``2**1, 2**(1 + 1/16), ..., 2**25``.
    """
    m = np.arange((last_exponent - first_exponent) * per_octave + 1)
    grid = 2.0 ** (first_exponent + m / per_octave)
    grid.setflags(write=False)
    return grid


TIME_GRID = log_time_grid()


def _times(t):
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise ValueError(f"diffusion times must be positive, got {t}")
    return t


def _decay(basis, t):
    # exp(-lambda t): shape [k] for scalar t, [k, T] for a vector of times
    t = _times(t)
    return np.exp(-np.multiply.outer(basis.eigenvalues, t))


def heat_kernel(basis, t, v1, v2):
    """Heat kernel ``h_t(v1, v2)`` for a single vertex pair."""
    phi = basis.eigenvectors
    return float((phi[v1] * phi[v2]) @ _decay(basis, float(t)))


def heat_kernel_pairs(basis, t, v1, v2):
    """Heat kernel for arrays of vertex pairs; ``t`` may be a vector of times.

    Returns shape ``[P]`` for scalar ``t`` and ``[P, T]`` otherwise.
    """
    phi = basis.eigenvectors
    v1 = np.asarray(v1)
    v2 = np.asarray(v2)
    return (phi[v1] * phi[v2]) @ _decay(basis, t)


def heat_kernel_matrix(basis, t):
    """Dense ``[N, N]`` heat kernel at one time."""
    phi = basis.eigenvectors
    return (phi * _decay(basis, float(t))) @ phi.T


def auto_diffusivity(basis, t):
    """``h_t(v, v)`` for every vertex; shape ``[N]`` or ``[N, T]``."""
    return np.square(basis.eigenvectors) @ _decay(basis, t)


def _commute_coefficients(basis):
    if basis.k < 2:
        raise ValueError("the commute-time kernel needs k >= 2")
    lam = basis.eigenvalues[1:]
    tol = basis.zero_tolerance()
    if np.any(lam <= tol):
        bad = int(np.argmax(lam <= tol)) + 1
        raise NumericalError(
            f"eigenvalue {bad} is {lam[bad - 1]!r} (<= {tol:.3e}); "
            "the mesh is disconnected and the commute-time kernel is undefined"
        )
    return 1.0 / lam


def commute_time_kernel(basis, v1, v2):
    """Commute-time kernel ``c(v1, v2)``; the constant mode is excluded."""
    coef = _commute_coefficients(basis)
    phi = basis.eigenvectors[:, 1:]
    return float((phi[v1] * phi[v2]) @ coef)


def commute_time_pairs(basis, v1, v2):
    coef = _commute_coefficients(basis)
    phi = basis.eigenvectors[:, 1:]
    return (phi[np.asarray(v1)] * phi[np.asarray(v2)]) @ coef


def commute_time_diagonal(basis):
    """``c(v, v)`` for every vertex."""
    coef = _commute_coefficients(basis)
    return np.square(basis.eigenvectors[:, 1:]) @ coef


def diffusion_distance_pairs(basis, t, v1, v2):
    """Diffusion distance ``||h_t(v1, .) - h_t(v2, .)||`` in L2(A) for vertex pairs."""
    phi = basis.eigenvectors
    diff = phi[np.asarray(v1)] - phi[np.asarray(v2)]
    w = np.exp(-2.0 * basis.eigenvalues * float(_times(t)))
    return np.sqrt(np.maximum(np.square(diff) @ w, 0.0))


def diffusion_distance(basis, t, v1, v2):
    return float(diffusion_distance_pairs(basis, t, [v1], [v2])[0])


def scale_invariant_spectrum(samples, grid=TIME_GRID):
    """DFT magnitude of ``d log h / d log t`` for kernel samples on a log grid.

    Parameters
    ----------
    samples : array_like, shape=[..., T]
        Positive kernel values at the times of ``grid``.
    grid : array_like, shape=[T]
        Logarithmically uniform times.

    Returns
    -------
    ndarray, shape=[..., T]
        Magnitudes indexed by discrete frequency ``0 .. T-1``.
    """
    samples = np.asarray(samples, dtype=float)
    if np.any(~(samples > 0)):
        raise KernelDomainError(
            "heat kernel is non-positive at some sample time; its logarithm is "
            "undefined (use the auto-diffusivity v1 == v2, or more eigenpairs)"
        )
    log_t = np.log(np.asarray(grid, dtype=float))
    step = np.diff(log_t)
    if not np.allclose(step, step[0], rtol=1e-9, atol=0):
        raise ValueError("time grid must be uniform in log t")
    deriv = np.gradient(np.log(samples), step[0], axis=-1, edge_order=1)
    return np.abs(np.fft.fft(deriv, axis=-1))


def modified_heat_kernel(basis, grid, v1, v2):
    """Scale-invariant modified heat kernel of one vertex pair, shape=[T].

    Raises
    ------
    KernelDomainError
        If ``h_t(v1, v2) <= 0`` at any time of the grid.
    """
    h = heat_kernel_pairs(basis, grid, [v1], [v2])[0]
    return scale_invariant_spectrum(h, grid)


def modified_heat_kernel_pairs(basis, grid, v1, v2, chunk=4096):
    """Modified heat kernel for arrays of vertex pairs, shape=[P, T]."""
    v1 = np.asarray(v1)
    v2 = np.asarray(v2)
    grid = np.asarray(grid, dtype=float)
    out = np.empty((len(v1), len(grid)))
    decay = _decay(basis, grid)
    phi = basis.eigenvectors
    for s in range(0, len(v1), chunk):
        sl = slice(s, s + chunk)
        h = (phi[v1[sl]] * phi[v2[sl]]) @ decay
        try:
            out[sl] = scale_invariant_spectrum(h, grid)
        except KernelDomainError:
            bad = s + int(np.argmax(np.any(h <= 0, axis=1)))
            raise KernelDomainError(
                f"heat kernel between vertices {int(v1[bad])} and {int(v2[bad])} is "
                "non-positive at some grid time; its logarithm is undefined"
            ) from None
    return out


def modified_auto_diffusivity(basis, grid=TIME_GRID):
    """Modified heat kernel ``h^_w(v, v)`` for every vertex, shape=[N, T]."""
    return scale_invariant_spectrum(auto_diffusivity(basis, grid), grid)


def _payload_hash(lam, phi, areas):
    h = hashlib.sha256()
    for arr in (lam, phi, areas):
        h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return h.hexdigest()


def save_basis(basis, path, mesh_hash=""):
    """Write a basis and the hash of its mesh to an ``.npz`` cache file."""
    path = os.fspath(path)
    with open(path, "wb") as fh:
        np.savez(
            fh,
            format=np.array(CACHE_FORMAT),
            version=np.array(CACHE_VERSION),
            mesh_hash=np.array(mesh_hash),
            payload_hash=np.array(_payload_hash(basis.eigenvalues, basis.eigenvectors, basis.areas)),
            eigenvalues=basis.eigenvalues,
            eigenvectors=basis.eigenvectors,
            areas=basis.areas,
        )


def read_cache_header(path):
    """Return ``(mesh_hash, N, k)`` of a cache file without validating it."""
    with np.load(os.fspath(path), allow_pickle=False) as z:
        return str(z["mesh_hash"]), int(z["eigenvectors"].shape[0]), int(z["eigenvalues"].shape[0])


def load_basis(path, mesh=None, W=None):
    """Load and verify a cached basis.

    The payload hash is always checked.  When ``mesh`` is given its content
    hash must match the cached one and the eigen-residual is checked against
    the mesh's stiffness matrix (or ``W`` if supplied).

    Raises
    ------
    DataMismatchError
        On a corrupted payload, a wrong file format or a mesh hash mismatch.
    EigensolverError
        If the loaded basis fails its invariants.
    """
    try:
        with np.load(os.fspath(path), allow_pickle=False) as z:
            fmt = str(z["format"])
            version = int(z["version"])
            mesh_hash = str(z["mesh_hash"])
            stored = str(z["payload_hash"])
            lam = z["eigenvalues"]
            phi = z["eigenvectors"]
            areas = z["areas"]
    except (OSError, KeyError, ValueError) as exc:
        raise DataMismatchError(f"{path}: unreadable spectral cache ({exc})") from exc
    if fmt != CACHE_FORMAT or version != CACHE_VERSION:
        raise DataMismatchError(f"{path}: unsupported cache format {fmt!r} v{version}")
    if _payload_hash(lam, phi, areas) != stored:
        raise DataMismatchError(f"{path}: payload hash mismatch (corrupted cache)")
    basis = SpectralBasis(lam, phi, areas)
    if mesh is not None:
        if mesh.content_hash != mesh_hash:
            raise DataMismatchError(f"{path}: cache was computed for a different mesh")
        if W is None:
            W = cotangent_stiffness(mesh)
    return basis.validate(W)


def mesh_eigenpairs(mesh, k, seed=0, maxiter=None):
    """Convenience: assemble the cotangent pair of ``mesh`` and solve."""
    W, A, _ = laplacian_pair(mesh)
    return eigenpairs(W, A, k, seed=seed, maxiter=maxiter)
