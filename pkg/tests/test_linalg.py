import numpy as np
import pytest

from mspde import linalg
from mspde.errors import ParameterError, RankDeficiencyError

from oracles import (brute_force_numerical_rank, jacobi_svd_sigma,
                     lstsq_normal_equations, spectral_norm_oracle)


def _random(shape, seed):
    return linalg.RngStream(seed).substream(99).standard_normal(
        int(np.prod(shape))).reshape(shape)


class TestSvd:
    def test_identity(self):
        res = linalg.svd(np.eye(3))
        assert np.allclose(res.sigma, [1.0, 1.0, 1.0], atol=1e-14)

    def test_diagonal(self):
        res = linalg.svd(np.diag([3.0, 2.0, 1.0]))
        assert np.allclose(res.sigma, [3.0, 2.0, 1.0], atol=1e-14)
        # U and V are signed permutations of the identity
        assert np.allclose(np.abs(res.u), np.eye(3), atol=1e-12)
        assert np.allclose(np.abs(res.v), np.eye(3), atol=1e-12)
        assert np.allclose(res.u * res.v, np.eye(3), atol=1e-12)

    def test_against_jacobi_oracle(self):
        a = _random((50, 30), seed=3)
        res = linalg.svd(a)
        assert np.allclose(res.sigma, jacobi_svd_sigma(a), rtol=0, atol=1e-8)

    @pytest.mark.parametrize("shape,seed", [((40, 12), 0), ((12, 40), 1),
                                            ((25, 25), 2)])
    def test_invariants(self, shape, seed):
        a = _random(shape, seed)
        res = linalg.svd(a)
        r = res.sigma.size
        assert r == min(shape)
        assert np.all(np.diff(res.sigma) <= 1e-12)
        assert np.all(res.sigma >= 0)
        assert np.max(np.abs(res.u.T @ res.u - np.eye(r))) <= 1e-10
        assert np.max(np.abs(res.v.T @ res.v - np.eye(r))) <= 1e-10
        recon = res.u @ np.diag(res.sigma) @ res.v.T
        assert spectral_norm_oracle(a - recon) <= 1e-10 * res.sigma[0]

    def test_rejects_non_finite(self):
        with pytest.raises(ParameterError):
            linalg.svd(np.array([[1.0, np.nan]]))


class TestQr:
    def test_orthonormal_input(self):
        q0, _ = np.linalg.qr(_random((8, 8), 5))
        q, r = linalg.qr(q0)
        signs = np.sign(np.diag(r))
        assert np.allclose(q * signs, q0, atol=1e-12)
        assert np.allclose(np.abs(np.diag(r)), 1.0, atol=1e-12)

    def test_single_column(self):
        q, r = linalg.qr(np.array([[3.0], [4.0]]))
        assert np.allclose(np.abs(q[:, 0]), [0.6, 0.8])
        assert np.allclose(np.abs(r), [[5.0]])

    def test_identities(self):
        a = _random((40, 10), 7)
        q, r = linalg.qr(a)
        assert np.max(np.abs(q.T @ q - np.eye(10))) <= 1e-10
        assert np.allclose(np.tril(r, -1), 0.0)
        assert np.max(np.abs(a - q @ r)) <= 1e-10 * np.max(np.abs(a))

    def test_rank_deficient_flags_diagonal(self):
        a = _random((20, 3), 11)
        a = np.column_stack([a, a[:, 0] + a[:, 1]])
        _, r = linalg.qr(a)
        assert np.min(np.abs(np.diag(r))) <= 1e-12 * np.max(np.abs(np.diag(r)))

    def test_wide_rejected(self):
        with pytest.raises(ParameterError):
            linalg.qr(_random((3, 5), 0))


class TestLeastSquares:
    def test_square_equals_direct_solve(self):
        a = _random((6, 6), 13) + 6 * np.eye(6)
        b = _random(6, 14)
        x = linalg.solve_least_squares(a, b)
        assert np.allclose(x, np.linalg.solve(a, b), atol=1e-10)
        assert np.linalg.norm(a @ x - b) <= 1e-10 * np.linalg.norm(b)

    def test_mean_of_two_points(self):
        x = linalg.solve_least_squares(np.array([[1.0], [1.0]]),
                                       np.array([0.0, 2.0]))
        assert np.allclose(x, [1.0], atol=1e-14)

    def test_against_normal_equation_oracle(self):
        a = _random((30, 10), 21)
        b = _random(30, 22)
        x = linalg.solve_least_squares(a, b)
        assert np.allclose(x, lstsq_normal_equations(a, b), rtol=0, atol=1e-8)

    def test_residual_orthogonality(self):
        for seed in range(5):
            a = _random((25, 7), seed)
            b = _random(25, seed + 50)
            x = linalg.solve_least_squares(a, b)
            r = a @ x - b
            assert np.linalg.norm(a.T @ r) <= 1e-8 * np.linalg.norm(a.T @ b) + 1e-12

    def test_rank_deficient_raises_with_rank(self):
        base = _random((20, 4), 31)
        a = np.column_stack([base, base[:, 0] - 2 * base[:, 2]])
        with pytest.raises(RankDeficiencyError) as info:
            linalg.solve_least_squares(a, _random(20, 32))
        assert info.value.numerical_rank == 4

    def test_underdetermined_rejected(self):
        with pytest.raises(ParameterError):
            linalg.solve_least_squares(_random((3, 5), 0), np.zeros(3))


class TestRandomizedRange:
    def test_exact_low_rank_captured(self):
        u = np.linalg.qr(_random((60, 8), 41))[0]
        v = np.linalg.qr(_random((40, 8), 42))[0]
        a = u @ np.diag([5.0, 4, 3, 2, 1, 0.5, 0.2, 0.1]) @ v.T
        q = linalg.randomized_range(lambda om: a @ om, 40, k=8, p=4,
                                    rng=linalg.RngStream(0).substream(1))
        err = spectral_norm_oracle(a - q @ (q.T @ a))
        assert err <= 1e-8 * 5.0

    def test_deterministic_given_stream(self):
        a = _random((30, 20), 43)
        r1 = linalg.randomized_range(lambda om: a @ om, 20, 4, 3,
                                     linalg.RngStream(9).substream(2))
        r2 = linalg.randomized_range(lambda om: a @ om, 20, 4, 3,
                                     linalg.RngStream(9).substream(2))
        assert np.array_equal(r1, r2)

    def test_full_sampling_spans_column_space(self):
        a = _random((30, 12), 44)
        q = linalg.randomized_range(lambda om: a @ om, 12, k=8, p=4,
                                    rng=linalg.RngStream(4).substream(0))
        err = spectral_norm_oracle(a - q @ (q.T @ a))
        assert err <= 1e-10 * spectral_norm_oracle(a)

    def test_parameter_errors(self):
        a = np.eye(5)
        rng = linalg.RngStream(0)
        with pytest.raises(ParameterError):
            linalg.randomized_range(lambda om: a @ om, 5, k=4, p=2, rng=rng)
        with pytest.raises(ParameterError):
            linalg.randomized_range(lambda om: a @ om, 5, k=1, p=2, rng=rng)
        with pytest.raises(ParameterError):
            linalg.randomized_range(lambda om: a @ om, 5, k=2, p=1, rng=rng)

    def test_average_error_bound_small(self):
        # scaled-down version of the acceptance run: 20 trials
        n, m = 60, 80
        sig = 2.0 ** -(np.arange(1, n + 1, dtype=float))
        root = linalg.RngStream(77)
        qu, _ = np.linalg.qr(root.substream(0).standard_normal(m * n).reshape(m, n))
        qv, _ = np.linalg.qr(root.substream(1).standard_normal(n * n).reshape(n, n))
        a = qu @ np.diag(sig) @ qv.T
        bound = linalg.average_range_error_bound(sig, 10, 5)
        errs = [spectral_norm_oracle(a - q @ (q.T @ a)) for q in
                (linalg.randomized_range(lambda om: a @ om, n, 10, 5,
                                         root.substream(2, t))
                 for t in range(20))]
        assert np.mean(errs) <= 1.1 * bound


class TestProjectionError:
    def test_complete_basis(self):
        g = _random((30, 6), 51)
        q = np.linalg.svd(g, full_matrices=False)[0]
        assert linalg.projection_error(g, q) <= 1e-10

    def test_leading_vector_leaves_sigma2(self):
        g = _random((30, 6), 52)
        u, s, _ = np.linalg.svd(g, full_matrices=False)
        err = linalg.projection_error(g, u[:, :1])
        assert abs(err - s[1] / s[0]) <= 1e-8

    def test_against_residual_svd_oracle(self):
        g = _random((25, 10), 53)
        q = np.linalg.qr(_random((25, 4), 54))[0]
        expected = spectral_norm_oracle(g - q @ (q.T @ g)) / spectral_norm_oracle(g)
        assert abs(linalg.projection_error(g, q) - expected) <= 1e-10

    def test_zero_matrix_rejected(self):
        q = np.linalg.qr(_random((10, 2), 55))[0]
        with pytest.raises(ParameterError):
            linalg.projection_error(np.zeros((10, 3)), q)

    def test_non_orthonormal_rejected(self):
        g = _random((10, 3), 56)
        with pytest.raises(ParameterError):
            linalg.projection_error(g, 2.0 * np.linalg.qr(g)[0])


class TestRankAndWidth:
    def test_threshold_count(self):
        assert linalg.numerical_rank([1.0, 0.5, 1e-8], 1e-6) == 2

    def test_tau_above_sigma1(self):
        assert linalg.numerical_rank([1.0, 0.5], 2.0) == 0

    def test_normalized(self):
        assert linalg.numerical_rank([10.0, 1.0, 1e-4], 1e-3, normalize=True) == 2

    def test_matches_brute_force(self):
        rng = linalg.RngStream(6).substream(0)
        for trial in range(200):
            sigma = np.sort(np.exp(2 * rng.substream(trial).standard_normal(12)))[::-1]
            tau = float(np.exp(rng.substream(trial, 1).standard_normal(1)[0]))
            assert linalg.numerical_rank(sigma, tau) == \
                brute_force_numerical_rank(sigma, tau)

    def test_invalid_tau(self):
        with pytest.raises(ParameterError):
            linalg.numerical_rank([1.0], 0.0)

    def test_width_endpoints(self):
        sigma = [4.0, 2.0, 1.0]
        assert linalg.kolmogorov_width(sigma, 0) == 4.0
        assert linalg.kolmogorov_width(sigma, 3) == 0.0
        with pytest.raises(ParameterError):
            linalg.kolmogorov_width(sigma, 4)

    def test_rank_implies_width_bound(self):
        rng = linalg.RngStream(8)
        for trial in range(200):
            sigma = np.sort(np.abs(rng.substream(trial).standard_normal(9)))[::-1]
            tau = 0.5 * float(np.abs(rng.substream(trial, 1).standard_normal(1)[0])) + 1e-6
            n = linalg.numerical_rank(sigma, tau)
            assert linalg.kolmogorov_width(sigma, n) <= tau


class TestRngStream:
    def test_order_independence(self):
        root = linalg.RngStream(123)
        a_then_b = (root.substream(1, 0).standard_normal(5),
                    root.substream(2, 0).standard_normal(5))
        b_then_a = (root.substream(2, 0).standard_normal(5),
                    root.substream(1, 0).standard_normal(5))
        assert np.array_equal(a_then_b[0], b_then_a[1])
        assert np.array_equal(a_then_b[1], b_then_a[0])

    def test_distinct_keys_distinct_draws(self):
        root = linalg.RngStream(123)
        assert not np.array_equal(root.substream(1).standard_normal(8),
                                  root.substream(2).standard_normal(8))
        assert not np.array_equal(root.substream(1).standard_normal(8),
                                  linalg.RngStream(124).substream(1).standard_normal(8))

    def test_matrix_columns_match_substreams(self):
        root = linalg.RngStream(5).substream(3)
        m = root.normal_matrix(7, 4)
        for j in range(4):
            assert np.array_equal(m[:, j], root.substream(j).standard_normal(7))

    def test_polar_normals_moments(self):
        x = linalg.RngStream(31).substream(0).standard_normal(200000)
        assert abs(x.mean()) < 0.02
        assert abs(x.std() - 1.0) < 0.02
        assert abs((x ** 4).mean() - 3.0) < 0.1
