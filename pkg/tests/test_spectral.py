import numpy as np
import pytest
import scipy.linalg

from diffmser import shapes
from diffmser.errors import DataMismatchError, EigensolverError, NumericalError
from diffmser.laplacian import laplacian_pair
from diffmser.spectral import (
    TIME_GRID,
    KernelDomainError,
    SpectralBasis,
    auto_diffusivity,
    commute_time_kernel,
    commute_time_pairs,
    diffusion_distance,
    diffusion_distance_pairs,
    eigenpairs,
    heat_kernel,
    heat_kernel_matrix,
    heat_kernel_pairs,
    load_basis,
    mesh_eigenpairs,
    modified_heat_kernel,
    modified_heat_kernel_pairs,
    save_basis,
    scale_invariant_spectrum,
)


def test_grid():
    assert len(TIME_GRID) == 385
    assert TIME_GRID[0] == 2.0 and TIME_GRID[-1] == 2.0**25
    assert np.all(np.diff(TIME_GRID) > 0)


def test_chain_eigenpairs(chain_basis):
    W = np.array([[1.0, -1.0], [-1.0, 1.0]])
    lam, vec = np.linalg.eigh(W)
    np.testing.assert_allclose(chain_basis.eigenvalues, lam, atol=1e-14)
    for i in range(2):
        assert abs(abs(chain_basis.eigenvectors[:, i] @ vec[:, i]) - 1) < 1e-12


def test_chain_heat(chain_basis):
    for t in (0.1, 1.0, 3.0):
        H = scipy.linalg.expm(-t * np.array([[1.0, -1.0], [-1.0, 1.0]]))
        assert heat_kernel(chain_basis, t, 0, 0) == pytest.approx((1 + np.exp(-2 * t)) / 2, rel=1e-12)
        np.testing.assert_allclose(heat_kernel_matrix(chain_basis, t), H, atol=1e-12)
    assert heat_kernel(chain_basis, 50.0, 0, 0) == pytest.approx(0.5, rel=1e-12)
    np.testing.assert_allclose(auto_diffusivity(chain_basis, 1.0), (1 + np.exp(-2)) / 2, rtol=1e-12)


def test_chain_commute(chain_basis):
    assert commute_time_kernel(chain_basis, 0, 0) == pytest.approx(0.25, rel=1e-12)
    assert commute_time_kernel(chain_basis, 0, 1) == pytest.approx(-0.25, rel=1e-12)


def test_full_basis_reconstruction():
    mesh = shapes.icosahedron()
    W, A, da = laplacian_pair(mesh)
    b = eigenpairs(W, A, mesh.n_vertices)
    phi, lam = b.eigenvectors, b.eigenvalues
    lhs = W.toarray() / da[:, None]
    rhs = phi @ np.diag(lam) @ phi.T @ np.diag(da)
    np.testing.assert_allclose(lhs, rhs, atol=1e-8)


def test_dense_expm_oracle(small_sphere):
    mesh, W, basis = small_sphere
    da = basis.areas
    for t in (0.05, 0.5, 2.0):
        oracle = scipy.linalg.expm(-t * (W.toarray() / da[:, None]))
        # h_t(x, y) is the kernel of exp(-t A^-1 W) with respect to the measure da
        np.testing.assert_allclose(heat_kernel_matrix(basis, t), oracle / da[None, :], atol=1e-6)


def test_diffusion_distance_brute_force(small_sphere):
    _, _, basis = small_sphere
    H = heat_kernel_matrix(basis, 0.3)
    da = basis.areas
    rng = np.random.default_rng(0)
    for v1, v2 in rng.integers(0, basis.n_vertices, size=(20, 2)):
        direct = np.sum((H[v1] - H[v2]) ** 2 * da)
        assert diffusion_distance(basis, 0.3, v1, v2) ** 2 == pytest.approx(direct, abs=1e-8)
    assert diffusion_distance(basis, 0.3, 5, 5) == 0


def test_kernel_symmetry(blob_basis):
    rng = np.random.default_rng(1)
    v1, v2 = rng.integers(0, blob_basis.n_vertices, size=(2, 50))
    assert np.array_equal(heat_kernel_pairs(blob_basis, 7.0, v1, v2), heat_kernel_pairs(blob_basis, 7.0, v2, v1))
    assert np.array_equal(commute_time_pairs(blob_basis, v1, v2), commute_time_pairs(blob_basis, v2, v1))
    assert np.array_equal(diffusion_distance_pairs(blob_basis, 7.0, v1, v2), diffusion_distance_pairs(blob_basis, 7.0, v2, v1))


def test_auto_diffusivity_limit(blob_basis):
    h = auto_diffusivity(blob_basis, 1e9)
    np.testing.assert_allclose(h, 1 / blob_basis.total_area, rtol=1e-10)


def test_truncation_bound(blob_basis):
    # adding eigenpair k changes h_t by at most exp(-lambda_k t) max|phi_k|^2
    t = 100.0
    prev = auto_diffusivity(blob_basis.truncated(30), t)
    for k in range(30, 40):
        cur = auto_diffusivity(blob_basis.truncated(k + 1), t)
        bound = np.exp(-blob_basis.eigenvalues[k] * t) * np.max(np.abs(blob_basis.eigenvectors[:, k])) ** 2
        assert np.max(np.abs(cur - prev)) <= bound * (1 + 1e-12)
        prev = cur


def test_commute_scale_invariance():
    mesh = shapes.blob(frequency=8, seed=5)
    gamma = 2 ** (1 / 32)
    b0 = mesh_eigenpairs(mesh, 40)
    b1 = mesh_eigenpairs(mesh.transformed(scale=gamma), 40)
    v1 = np.arange(0, mesh.n_vertices, 7)
    v2 = v1[::-1]
    np.testing.assert_allclose(commute_time_pairs(b1, v1, v2), commute_time_pairs(b0, v1, v2), rtol=1e-6)


def test_commute_zero_eigenvalue_error():
    b = SpectralBasis(np.array([0.0, 0.0, 1.0]), np.eye(3), np.ones(3))
    with pytest.raises(NumericalError):
        commute_time_kernel(b, 0, 1)


def test_isometry_kernels():
    mesh = shapes.blob(frequency=8, seed=6)
    rng = np.random.default_rng(2)
    perm = rng.permutation(mesh.n_vertices)
    moved = mesh.transformed(rotation=shapes.random_rotation(rng), translation=[5, 5, 5], permutation=perm)
    b0 = mesh_eigenpairs(mesh, 30)
    b1 = mesh_eigenpairs(moved, 30)
    inv = np.argsort(perm)
    # the last kept pair may split a multiplet; compare only well-separated bases
    np.testing.assert_allclose(b1.eigenvalues, b0.eigenvalues, rtol=1e-8, atol=1e-12)
    h0 = auto_diffusivity(b0, 50.0)
    h1 = auto_diffusivity(b1, 50.0)
    np.testing.assert_allclose(h1[inv], h0, rtol=1e-6)


def test_sihks_flat_signal():
    assert np.all(scale_invariant_spectrum(np.full(385, 0.3)) == 0)


def test_sihks_domain():
    with pytest.raises(KernelDomainError):
        scale_invariant_spectrum(np.r_[np.ones(384), 0.0])


def test_sihks_grid_shift():
    # a smooth decaying signal sampled on the grid and on the grid shifted by one step
    t = TIME_GRID
    shift = 2 ** (1 / 16)

    def signal(s):
        return 1e-3 + 1.0 / (1 + s / 1e3) ** 2 + 0.5 * np.exp(-s / 3e4)

    a = scale_invariant_spectrum(signal(t))
    b = scale_invariant_spectrum(signal(t * shift))
    rel = np.abs(a - b) / np.abs(a)
    significant = np.abs(a) > 1e-3 * np.abs(a).max()
    bad = np.flatnonzero(significant & (rel >= 0.02))
    assert len(bad) <= 2


def test_modified_kernel_pairs_match_single(blob_mesh, blob_basis):
    # neighboring vertices: far pairs can go negative under truncation
    v1, v2 = blob_mesh.edges[:5].T
    batch = modified_heat_kernel_pairs(blob_basis, TIME_GRID, v1, v2, chunk=2)
    for i in range(5):
        np.testing.assert_allclose(batch[i], modified_heat_kernel(blob_basis, TIME_GRID, v1[i], v2[i]), rtol=0, atol=1e-12 * np.abs(batch[i]).max())


def test_cache_round_trip(tmp_path):
    mesh = shapes.geodesic_sphere(8)
    W, A, _ = laplacian_pair(mesh)
    b = eigenpairs(W, A, 50)
    save_basis(b, tmp_path / "c.npz", mesh.content_hash)
    back = load_basis(tmp_path / "c.npz", mesh=mesh, W=W)
    assert np.array_equal(back.eigenvalues, b.eigenvalues)
    assert np.array_equal(back.eigenvectors, b.eigenvectors)


def test_cache_corrupted(tmp_path):
    mesh = shapes.geodesic_sphere(4)
    b = mesh_eigenpairs(mesh, 10)
    path = tmp_path / "c.npz"
    save_basis(b, path, mesh.content_hash)
    with np.load(path) as z:
        data = dict(z)
    data["eigenvalues"] = data["eigenvalues"] * 1.001
    np.savez(path, **data)
    with pytest.raises(DataMismatchError):
        load_basis(path, mesh=mesh)


def test_cache_wrong_mesh(tmp_path):
    mesh = shapes.geodesic_sphere(4)
    b = mesh_eigenpairs(mesh, 10)
    save_basis(b, tmp_path / "c.npz", mesh.content_hash)
    with pytest.raises(DataMismatchError):
        load_basis(tmp_path / "c.npz", mesh=shapes.geodesic_sphere(3))


def test_k_out_of_range(triangle):
    W, A, _ = laplacian_pair(triangle)
    with pytest.raises(ValueError):
        eigenpairs(W, A, 4)


def test_iterative_solver_budget():
    mesh = shapes.geodesic_sphere(12)
    W, A, _ = laplacian_pair(mesh)
    with pytest.raises(EigensolverError):
        eigenpairs(W, A, 40, maxiter=1)


def test_iterative_matches_dense():
    mesh = shapes.geodesic_sphere(8)  # 642 vertices, iterative path
    W, A, da = laplacian_pair(mesh)
    b = eigenpairs(W, A, 16)
    lam = scipy.linalg.eigh(W.toarray(), np.diag(da), eigvals_only=True, subset_by_index=[0, 15])
    np.testing.assert_allclose(b.eigenvalues, lam, rtol=1e-9, atol=1e-10)


def test_deterministic():
    mesh = shapes.geodesic_sphere(8)
    W, A, _ = laplacian_pair(mesh)
    b0 = eigenpairs(W, A, 12, seed=3)
    b1 = eigenpairs(W, A, 12, seed=3)
    assert np.array_equal(b0.eigenvectors, b1.eigenvectors)


def sphere_trace(t, lmax=400):
    # analytic unit-sphere heat kernel on the diagonal: sum (2l+1) e^{-l(l+1)t} / 4 pi
    l = np.arange(lmax + 1)
    return np.sum((2 * l + 1) * np.exp(-l * (l + 1) * t)) / (4 * np.pi)


def test_curvature_expansion():
    # 4 pi t h_t(x, x) - 1 ~ t/3 on the unit sphere (scalar curvature 2)
    assert (4 * np.pi * 1e-3 * sphere_trace(1e-3, 4000) - 1) / 1e-3 == pytest.approx(1 / 3, rel=0.01)
    mesh = shapes.geodesic_sphere(16)
    b = mesh_eigenpairs(mesh, 300)
    for t in (0.5, 1.0):
        h = b.areas @ auto_diffusivity(b, t) / b.total_area
        coeff = (4 * np.pi * t * h - 1) / t
        assert coeff == pytest.approx((4 * np.pi * t * sphere_trace(t) - 1) / t, rel=0.05)
