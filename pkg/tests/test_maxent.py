import numpy as np
import pytest

from dcsysid import (
    BandFormatError,
    DcHyperparams,
    InfeasibleBandError,
    OutOfBandError,
    PartialBandMatrix,
    build_dc_kernel,
    central_extension,
    check_feasibility,
    gaussian_entropy,
    one_step_extension,
    read_band_text,
)


def random_spd_band(rng, n, m, jitter=0.5):
    a = rng.standard_normal((n, n))
    sigma = a @ a.T + jitter * n * np.eye(n)
    return PartialBandMatrix.from_dense(sigma, m), sigma


class TestPartialBandMatrix:
    def test_from_dense_and_get(self):
        a = np.array([[4.0, 1.0, 0.0], [1.0, 5.0, 2.0], [0.0, 2.0, 6.0]])
        p = PartialBandMatrix.from_dense(a, 1)
        assert p.n == 3 and p.m == 1
        assert p.get(0, 0) == 4.0
        assert p.get(2, 1) == 2.0  # symmetric access
        with pytest.raises(OutOfBandError):
            p.get(0, 2)

    def test_rejects_asymmetric_band(self):
        a = np.array([[1.0, 2.0], [3.0, 1.0]])
        with pytest.raises(ValueError):
            PartialBandMatrix.from_dense(a, 1)

    def test_diagonal_length_validation(self):
        with pytest.raises(ValueError):
            PartialBandMatrix(n=3, m=1, diagonals=[np.ones(3), np.ones(3)])
        with pytest.raises(ValueError):
            PartialBandMatrix(n=3, m=1, diagonals=[np.array([1.0, np.inf, 1.0]), np.ones(2)])
        with pytest.raises(ValueError):
            PartialBandMatrix(n=3, m=3, diagonals=[np.ones(3)] * 4)

    def test_principal_block(self):
        rng = np.random.default_rng(0)
        p, sigma = random_spd_band(rng, 6, 2)
        np.testing.assert_array_equal(p.principal_block(1), sigma[1:4, 1:4])
        np.testing.assert_array_equal(p.principal_block(2, 2), sigma[2:4, 2:4])


class TestBandText:
    def test_round_trip(self):
        text = "4 1\n4.0 5.0 6.0 7.0\n\n1.0 2.0 3.0\n"
        p = read_band_text(text)
        assert p.n == 4 and p.m == 1
        np.testing.assert_array_equal(p.diagonals[0], [4.0, 5.0, 6.0, 7.0])
        np.testing.assert_array_equal(p.diagonals[1], [1.0, 2.0, 3.0])

    def test_header_errors(self):
        with pytest.raises(BandFormatError) as err:
            read_band_text("")
        assert err.value.line == 1
        with pytest.raises(BandFormatError):
            read_band_text("4\n1 2 3 4\n")
        with pytest.raises(BandFormatError):
            read_band_text("4 5\n1 2 3 4\n")  # m must be < n

    def test_body_errors(self):
        with pytest.raises(BandFormatError) as err:
            read_band_text("3 1\n1.0 2.0 3.0\n0.5 oops\n")
        assert err.value.line == 3
        with pytest.raises(BandFormatError):
            read_band_text("3 1\n1.0 2.0\n0.5 0.5\n")  # wrong length
        with pytest.raises(BandFormatError):
            read_band_text("3 1\n1.0 2.0 3.0\n")  # missing diagonal


class TestFeasibility:
    def test_positive_definite_band_is_feasible(self):
        rng = np.random.default_rng(1)
        p, _ = random_spd_band(rng, 8, 2)
        assert check_feasibility(p) == (True, None)

    def test_first_failing_block_is_reported(self):
        p = PartialBandMatrix(
            n=3, m=1, diagonals=[np.ones(3), np.array([5.0, 0.1])]
        )
        assert check_feasibility(p) == (False, 0)
        p = PartialBandMatrix(
            n=3, m=1, diagonals=[np.ones(3), np.array([0.1, 5.0])]
        )
        assert check_feasibility(p) == (False, 1)


class TestOneStep:
    def test_dc_corner_value(self):
        lam, rho = 0.8, 0.6
        k = build_dc_kernel(DcHyperparams(c=1.0, lam=lam, rho=rho), 3)
        p = PartialBandMatrix.from_dense(k, 1)
        np.testing.assert_allclose(one_step_extension(p), lam**2 * rho**2, rtol=1e-12)

    def test_agrees_with_central_extension_corner(self):
        rng = np.random.default_rng(2)
        for seed in range(5):
            p, _ = random_spd_band(np.random.default_rng(seed), 4, 2)
            x = one_step_extension(p)
            ext = central_extension(p)
            np.testing.assert_allclose(x, ext.completed[0, 3], rtol=1e-10)

    def test_requires_single_missing_corner(self):
        rng = np.random.default_rng(3)
        p, _ = random_spd_band(rng, 5, 1)
        with pytest.raises(ValueError):
            one_step_extension(p)


class TestCentralExtension:
    def test_band_entries_bit_exact(self):
        rng = np.random.default_rng(4)
        p, sigma = random_spd_band(rng, 7, 2)
        ext = central_extension(p)
        for i in range(7):
            for j in range(7):
                if abs(i - j) <= 2:
                    assert ext.completed[i, j] == sigma[i, j]

    def test_inverse_is_banded(self):
        rng = np.random.default_rng(5)
        p, _ = random_spd_band(rng, 9, 1)
        ext = central_extension(p)
        inv = np.linalg.inv(ext.completed)
        off = np.abs(np.subtract.outer(np.arange(9), np.arange(9)))
        assert np.abs(inv[off > 1]).max() <= 1e-9 * np.abs(inv).max()

    def test_factored_inverse_consistent(self):
        rng = np.random.default_rng(6)
        p, _ = random_spd_band(rng, 8, 2)
        ext = central_extension(p)
        from_factor = np.linalg.inv((ext.l_factor * ext.v_diag) @ ext.l_factor.T)
        np.testing.assert_allclose(from_factor, ext.completed, rtol=1e-8)
        np.testing.assert_array_equal(np.diag(ext.l_factor), np.ones(8))
        assert np.all(ext.v_diag > 0)

    def test_entropy_and_determinant(self):
        rng = np.random.default_rng(7)
        p, _ = random_spd_band(rng, 6, 1)
        ext = central_extension(p)
        sign, logdet = np.linalg.slogdet(ext.completed)
        assert sign == 1.0
        assert -np.sum(np.log(ext.v_diag)) == pytest.approx(logdet, abs=1e-8)
        assert ext.entropy == pytest.approx(gaussian_entropy(ext.completed), abs=1e-8)

    def test_full_band_is_identity_operation(self):
        rng = np.random.default_rng(8)
        p, sigma = random_spd_band(rng, 5, 4)
        np.testing.assert_array_equal(central_extension(p).completed, sigma)

    def test_dc_band_completion_recovers_kernel(self):
        for seed in range(5):
            rng = np.random.default_rng(100 + seed)
            h = DcHyperparams(
                c=1.0, lam=rng.uniform(0.4, 0.9), rho=rng.uniform(-0.8, 0.8)
            )
            n = int(rng.integers(3, 12))
            k = build_dc_kernel(h, n)
            ext = central_extension(PartialBandMatrix.from_dense(k, 1))
            np.testing.assert_allclose(ext.completed, k, rtol=1e-10)

    def test_infeasible_raises_with_block(self):
        p = PartialBandMatrix(n=3, m=1, diagonals=[np.ones(3), np.array([0.1, 5.0])])
        with pytest.raises(InfeasibleBandError) as err:
            central_extension(p)
        assert err.value.block == 1

    def test_entropy_beats_sampled_completions(self):
        rng = np.random.default_rng(9)
        p, _ = random_spd_band(rng, 4, 1)
        ext = central_extension(p)
        _, best = np.linalg.slogdet(ext.completed)
        off = np.abs(np.subtract.outer(np.arange(4), np.arange(4)))
        free = off > 1
        trials = ext.completed[None].repeat(2000, axis=0)
        noise = rng.normal(scale=0.3, size=(2000, 4, 4))
        noise = np.where(free, (noise + noise.swapaxes(1, 2)) / 2, 0.0)
        trials = trials + noise
        eigs = np.linalg.eigvalsh(trials)
        feasible = eigs[:, 0] > 0
        assert feasible.any()
        sampled = np.sum(np.log(eigs[feasible]), axis=1)
        assert best >= sampled.max() - 1e-10


class TestGaussianEntropy:
    def test_identity_covariance(self):
        n = 4
        expected = 0.5 * n * (1.0 + np.log(2.0 * np.pi))
        assert gaussian_entropy(np.eye(n)) == pytest.approx(expected, rel=1e-12)

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            gaussian_entropy(np.array([[1.0, 2.0], [2.0, 1.0]]))
