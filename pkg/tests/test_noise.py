"""Noise generator tests: moment oracles, mask identities, determinism."""

import numpy as np
import pytest

from tempgate.noise import (
    NoiseSetting,
    apply_gaussian,
    apply_missing,
    apply_noise,
    oracle_gate,
)


class TestGaussian:
    def test_sigma_zero_is_identity(self):
        f = np.arange(12.0).reshape(3, 4)
        np.testing.assert_array_equal(apply_gaussian(f, 0.0, seed=5), f)

    def test_moments_match_law_of_large_numbers(self):
        f = np.zeros((1000, 1000))
        out = apply_gaussian(f, 2.0, seed=11)
        diff = out - f
        n = diff.size
        assert abs(diff.mean()) < 3 * (2.0 / np.sqrt(n))
        assert abs(diff.var() - 4.0) < 0.01 * 4.0

    def test_seed_determinism(self):
        f = np.ones((40, 7))
        a = apply_gaussian(f, 1.5, seed=3)
        b = apply_gaussian(f, 1.5, seed=3)
        np.testing.assert_array_equal(a, b)
        c = apply_gaussian(f, 1.5, seed=4)
        assert np.any(a != c)

    def test_negative_sigma_rejected(self):
        with pytest.raises(ValueError):
            apply_gaussian(np.zeros((2, 2)), -1.0, seed=0)


class TestMissing:
    def test_rho_zero_keeps_everything(self):
        f = np.arange(6.0).reshape(2, 3)
        out, mask = apply_missing(f, 0.0, 5.0, seed=9)
        np.testing.assert_array_equal(out, f)
        np.testing.assert_array_equal(mask, np.ones_like(f))

    def test_rho_one_is_pure_noise(self):
        f = np.full((400, 50), 7.0)
        tau = 3.0
        out, mask = apply_missing(f, 1.0, tau, seed=2)
        np.testing.assert_array_equal(mask, np.zeros_like(f))
        assert abs(out.mean()) < 3 * tau / np.sqrt(out.size)
        assert abs(out.var() - tau**2) < 0.05 * tau**2

    def test_masked_fraction_binomial(self):
        f = np.zeros((1000, 1000))
        rho = 0.3
        _, mask = apply_missing(f, rho, 1.0, seed=17)
        frac_missing = 1.0 - mask.mean()
        se = np.sqrt(rho * (1 - rho) / mask.size)
        assert abs(frac_missing - rho) < 3 * se

    def test_seed_determinism(self):
        f = np.ones((30, 8))
        o1, m1 = apply_missing(f, 0.4, 2.0, seed=21)
        o2, m2 = apply_missing(f, 0.4, 2.0, seed=21)
        np.testing.assert_array_equal(o1, o2)
        np.testing.assert_array_equal(m1, m2)


class TestOracleGate:
    def test_all_ones_identity(self):
        f = np.arange(8.0).reshape(2, 4)
        np.testing.assert_array_equal(oracle_gate(f, np.ones_like(f)), f)

    def test_all_zeros_annihilates(self):
        f = np.arange(8.0).reshape(2, 4)
        np.testing.assert_array_equal(oracle_gate(f, np.zeros_like(f)), np.zeros_like(f))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            oracle_gate(np.zeros((2, 3)), np.zeros((3, 2)))

    def test_gate_removes_all_contamination(self):
        # After gating, every entry is either 0 or the original signed mu.
        y = np.array([1.0, -1.0, 1.0, -1.0, -1.0])
        mu = np.array([0.5, -2.0, 1.0])
        clean = y[:, None] * mu[None, :]
        noisy, mask = apply_missing(clean, 0.5, 10.0, seed=3)
        gated = oracle_gate(noisy, mask)
        ok = (gated == 0.0) | (gated == clean)
        assert np.all(ok)


class TestDispatch:
    def test_none_copies(self):
        f = np.ones((3, 3))
        out, mask = apply_noise(f, NoiseSetting(kind="none"))
        assert mask is None
        np.testing.assert_array_equal(out, f)
        assert out is not f

    def test_invalid_setting(self):
        with pytest.raises(ValueError):
            NoiseSetting(kind="salt-and-pepper")
        with pytest.raises(ValueError):
            NoiseSetting(kind="missing", rho=1.5)

    def test_gaussian_and_missing_dispatch(self):
        f = np.zeros((5, 5))
        out, mask = apply_noise(f, NoiseSetting(kind="gaussian", sigma=1.0, seed=1))
        assert mask is None and np.any(out != 0)
        out, mask = apply_noise(
            f, NoiseSetting(kind="missing", rho=0.5, tau=1.0, seed=1)
        )
        assert mask is not None and mask.shape == f.shape
