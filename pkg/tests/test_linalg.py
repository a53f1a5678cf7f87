"""Dense and block-tridiagonal linear algebra against independent oracles."""

import numpy as np
import pytest

from gmchain.linalg import (
    BlockTridiagonal,
    NotPositiveDefiniteError,
    SingularMatrixError,
    block_tridiag_marginal_covs,
    block_tridiag_solve,
    dense_solve,
    matmul,
    nearest_index,
    nearest_neighbor,
    pca_fit,
)


def matmul_oracle(a, b):
    """Triple-loop reference product."""
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for l in range(a.shape[1]):
                acc += a[i, l] * b[l, j]
            out[i, j] = acc
    return out


def random_spd_tridiag(rng, n, k, coupling=0.3):
    """SPD block tridiagonal built as D + off-diagonals with dominant diagonal."""
    diag = []
    for _ in range(n):
        m = rng.normal(size=(k, k))
        diag.append(m @ m.T + (k + 1.0) * np.eye(k))
    lower = [coupling * rng.normal(size=(k, k)) for _ in range(n - 1)]
    return BlockTridiagonal(
        diag=np.array(diag),
        lower=np.array(lower).reshape(n - 1, k, k),
        upper=np.array([l.T for l in lower]).reshape(n - 1, k, k),
    )


class TestMatmul:
    def test_identity(self):
        m = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(matmul(np.eye(2), m), m)

    def test_permutation(self):
        a = np.array([[1.0, 2.0], [3.0, 4.0]])
        b = np.array([[0.0, 1.0], [1.0, 0.0]])
        np.testing.assert_array_equal(matmul(a, b), [[2.0, 1.0], [4.0, 3.0]])

    def test_random_vs_triple_loop(self):
        rng = np.random.default_rng(42)
        a, b = rng.normal(size=(5, 5)), rng.normal(size=(5, 5))
        np.testing.assert_allclose(matmul(a, b), matmul_oracle(a, b), atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="inner dimensions"):
            matmul(np.eye(2), np.eye(3))


class TestDenseSolve:
    def test_identity(self):
        b = np.array([3.0, -1.0, 2.0])
        np.testing.assert_array_equal(dense_solve(np.eye(3), b), b)

    def test_diagonal(self):
        x = dense_solve(np.diag([2.0, 4.0]), np.array([2.0, 8.0]))
        np.testing.assert_allclose(x, [1.0, 2.0], atol=1e-15)

    def test_random_spd_residual(self):
        rng = np.random.default_rng(7)
        m = rng.normal(size=(8, 8))
        a = m @ m.T + 8 * np.eye(8)
        b = rng.normal(size=8)
        x = dense_solve(a, b)
        assert np.abs(a @ x - b).max() <= 1e-10

    def test_singular_reports_pivot(self):
        a = np.zeros((3, 3))
        a[0, 0] = 1.0
        with pytest.raises(SingularMatrixError) as err:
            dense_solve(a, np.ones(3))
        assert 0 <= err.value.pivot_index < 3

    def test_roundtrip_with_matmul(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            m = rng.normal(size=(6, 6))
            a = m @ m.T + 6 * np.eye(6)
            x = rng.normal(size=6)
            np.testing.assert_allclose(dense_solve(a, a @ x), x, atol=1e-8)


class TestBlockTridiagSolve:
    def test_single_block_matches_dense(self):
        rng = np.random.default_rng(0)
        m = rng.normal(size=(4, 4))
        spd = m @ m.T + 4 * np.eye(4)
        bt = BlockTridiagonal(diag=spd[None], lower=np.empty((0, 4, 4)),
                              upper=np.empty((0, 4, 4)))
        rhs = rng.normal(size=4)
        np.testing.assert_allclose(block_tridiag_solve(bt, rhs),
                                   dense_solve(spd, rhs), atol=1e-12)

    def test_second_difference_endpoint_rhs_is_linear(self):
        # identity blocks scaled by 2 with -I couplings and only the endpoints
        # driven: the solution is linear in the block index.
        n, k = 5, 3
        bt = BlockTridiagonal(
            diag=np.repeat(2.0 * np.eye(k)[None], n, axis=0),
            lower=np.repeat(-np.eye(k)[None], n - 1, axis=0),
            upper=np.repeat(-np.eye(k)[None], n - 1, axis=0),
        )
        start, end = np.zeros(k), np.array([6.0, -6.0, 12.0])
        rhs = np.zeros(n * k)
        rhs[:k] = start
        rhs[-k:] = end
        x = block_tridiag_solve(bt, rhs).reshape(n, k)
        for i in range(n):
            lam = (i + 1) / (n + 1.0)
            np.testing.assert_allclose(x[i], (1 - lam) * start + lam * end, atol=1e-10)

    def test_random_vs_dense_assembly(self):
        rng = np.random.default_rng(11)
        bt = random_spd_tridiag(rng, n=6, k=4)
        rhs = rng.normal(size=24)
        expected = dense_solve(bt.to_dense(), rhs)
        got = block_tridiag_solve(bt, rhs)
        assert np.abs(got - expected).max() <= 1e-8 * max(1.0, np.abs(expected).max())

    def test_property_matches_dense_across_sizes(self):
        rng = np.random.default_rng(5)
        for _ in range(30):
            n = int(rng.integers(1, 17))
            k = int(rng.integers(1, 9))
            bt = random_spd_tridiag(rng, n, k)
            rhs = rng.normal(size=n * k)
            expected = np.linalg.solve(bt.to_dense(), rhs)
            got = block_tridiag_solve(bt, rhs)
            rel = np.abs(got - expected).max() / max(1.0, np.abs(expected).max())
            assert rel <= 1e-8

    def test_non_spd_raises_with_block(self):
        bt = BlockTridiagonal(diag=np.array([[[-1.0]], [[2.0]]]),
                              lower=np.array([[[0.1]]]), upper=np.array([[[0.1]]]))
        with pytest.raises(NotPositiveDefiniteError) as err:
            block_tridiag_solve(bt, np.ones(2))
        assert err.value.block_index == 0


class TestBlockTridiagMarginals:
    def test_single_block_inverse(self):
        bt = BlockTridiagonal(diag=2.0 * np.eye(3)[None], lower=np.empty((0, 3, 3)),
                              upper=np.empty((0, 3, 3)))
        covs = block_tridiag_marginal_covs(bt)
        np.testing.assert_allclose(covs[0], 0.5 * np.eye(3), atol=1e-14)

    def test_scalar_second_difference(self):
        bt = BlockTridiagonal(
            diag=np.array([[[2.0]], [[2.0]], [[2.0]]]),
            lower=np.array([[[-1.0]], [[-1.0]]]),
            upper=np.array([[[-1.0]], [[-1.0]]]),
        )
        covs = block_tridiag_marginal_covs(bt)
        np.testing.assert_allclose(covs.ravel(), [0.75, 1.0, 0.75], atol=1e-12)

    def test_random_vs_dense_inverse(self):
        rng = np.random.default_rng(13)
        bt = random_spd_tridiag(rng, n=5, k=3)
        inv = np.linalg.inv(bt.to_dense())
        covs = block_tridiag_marginal_covs(bt)
        for i in range(5):
            np.testing.assert_allclose(covs[i], inv[i * 3:(i + 1) * 3, i * 3:(i + 1) * 3],
                                       atol=1e-8)

    def test_blocks_symmetric_positive_definite(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            n, k = int(rng.integers(2, 9)), int(rng.integers(1, 6))
            covs = block_tridiag_marginal_covs(random_spd_tridiag(rng, n, k))
            for block in covs:
                assert np.abs(block - block.T).max() <= 1e-10
                assert np.linalg.eigvalsh(block).min() > 0


class TestPCA:
    def test_points_on_line(self):
        t = np.linspace(-1, 1, 50)[:, None]
        data = t * np.array([[3.0, 4.0]]) / 5.0
        _, comps = pca_fit(data, 1)
        direction = np.array([0.6, 0.8])
        assert min(np.abs(comps[0] - direction).max(),
                   np.abs(comps[0] + direction).max()) <= 1e-12

    def test_isotropic_variances(self):
        rng = np.random.default_rng(0)
        data = rng.normal(size=(20000, 3))
        mean, comps = pca_fit(data, 3)
        proj = (data - mean) @ comps.T
        np.testing.assert_allclose(proj.var(axis=0, ddof=1), 1.0, rtol=0.05)

    def test_known_axis_variances(self):
        rng = np.random.default_rng(1)
        scales = np.array([2.0, 1.0, 0.1])  # variances 4, 1, 0.01
        data = rng.normal(size=(10000, 3)) * scales
        mean, comps = pca_fit(data, 3)
        proj = (data - mean) @ comps.T
        variances = proj.var(axis=0, ddof=1)
        np.testing.assert_allclose(variances, scales ** 2, rtol=0.10)
        for i in range(3):  # component i is axis i, up to sign
            assert np.abs(comps[i, i]) > 0.99

    def test_orthonormal_rows(self):
        rng = np.random.default_rng(2)
        data = rng.normal(size=(200, 6)) @ rng.normal(size=(6, 6))
        _, comps = pca_fit(data, 4)
        np.testing.assert_allclose(comps @ comps.T, np.eye(4), atol=1e-8)

    def test_too_few_samples(self):
        with pytest.raises(ValueError, match="at least 2"):
            pca_fit(np.ones((1, 3)), 1)


class TestNearestNeighbor:
    def test_exact_match(self):
        bank = [(np.array([0.0, 0.0]), "a"), (np.array([1.0, 1.0]), "b")]
        assert nearest_neighbor(np.array([1.0, 1.0]), bank) == "b"

    def test_tie_goes_to_lowest_index(self):
        bank = [(np.array([1.0, 0.0]), 0), (np.array([-1.0, 0.0]), 1)]
        assert nearest_neighbor(np.zeros(2), bank) == 0

    def test_matches_exhaustive_scan(self):
        rng = np.random.default_rng(9)
        vectors = rng.normal(size=(100, 8))
        queries = rng.normal(size=(20, 8))
        got = nearest_index(queries, vectors)
        for q, g in zip(queries, got):
            dists = [np.sum((q - v) ** 2) for v in vectors]
            assert g == int(np.argmin(dists))

    def test_empty_bank(self):
        with pytest.raises(ValueError, match="empty"):
            nearest_neighbor(np.zeros(2), [])
