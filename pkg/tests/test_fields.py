"""Core field container and tensor primitives."""

import numpy as np
import pytest

from holograd.fields import (
    ComplexField,
    bilinear_sample,
    complex_layer_norm,
    fft2,
    hermitian_inner,
    ifft2,
)


class TestComplexField:
    def test_stores_complex128(self):
        f = ComplexField(np.ones((4, 6)), 8e-6)
        assert f.data.dtype == np.complex128
        assert f.shape == (4, 6)
        assert f.pitch == 8e-6

    def test_rejects_non_2d(self):
        with pytest.raises(ValueError):
            ComplexField(np.ones((4, 4, 2)), 8e-6)

    def test_rejects_nan(self):
        bad = np.ones((4, 4), dtype=complex)
        bad[1, 2] = np.nan
        with pytest.raises(ValueError):
            ComplexField(bad, 8e-6)

    def test_rejects_bad_pitch(self):
        with pytest.raises(ValueError):
            ComplexField(np.ones((4, 4)), 0.0)
        with pytest.raises(ValueError):
            ComplexField(np.ones((4, 4)), -1e-6)

    def test_energy(self):
        f = ComplexField(np.full((3, 3), 2.0 + 0j), 1e-6)
        assert f.energy() == pytest.approx(36.0)


class TestFft:
    def test_round_trip(self, rng):
        a = rng.standard_normal((32, 32)) + 1j * rng.standard_normal((32, 32))
        assert np.allclose(ifft2(fft2(a)), a, atol=1e-13)

    def test_energy_preserving(self, rng):
        a = rng.standard_normal((64, 48)) + 1j * rng.standard_normal((64, 48))
        assert np.sum(np.abs(fft2(a)) ** 2) == pytest.approx(np.sum(np.abs(a) ** 2), rel=1e-12)

    def test_rejects_non_finite(self):
        bad = np.ones((8, 8), dtype=complex)
        bad[0, 0] = np.inf
        with pytest.raises(ValueError):
            fft2(bad)
        with pytest.raises(ValueError):
            ifft2(bad)

    def test_linearity(self, rng):
        a = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
        b = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
        assert np.allclose(fft2(2.0 * a + 3j * b), 2.0 * fft2(a) + 3j * fft2(b), atol=1e-12)


class TestHermitianInner:
    def test_hand_value(self):
        x = np.array([1 + 2j, 3 - 1j])
        y = np.array([2 - 1j, 1 + 1j])
        # (1+2j)(2+1j) + (3-1j)(1-1j) = (0+5j) + (2-4j) = 2 + 1j
        assert hermitian_inner(x, y) == pytest.approx(2 + 1j)

    def test_conjugate_symmetry(self, rng):
        x = rng.standard_normal(10) + 1j * rng.standard_normal(10)
        y = rng.standard_normal(10) + 1j * rng.standard_normal(10)
        assert hermitian_inner(x, y) == pytest.approx(np.conj(hermitian_inner(y, x)))

    def test_self_inner_is_energy(self, rng):
        x = rng.standard_normal(17) + 1j * rng.standard_normal(17)
        v = hermitian_inner(x, x)
        assert v.imag == pytest.approx(0.0, abs=1e-12)
        assert v.real == pytest.approx(np.sum(np.abs(x) ** 2))

    def test_global_phase_invariance(self, rng):
        # A shared rotation leaves the Hermitian product unchanged; the
        # plain dot product picks up the rotation twice.
        for seed in range(10):
            r = np.random.default_rng(seed)
            x = r.standard_normal(25) + 1j * r.standard_normal(25)
            y = r.standard_normal(25) + 1j * r.standard_normal(25)
            theta = r.uniform(0, 2 * np.pi)
            rot = np.exp(1j * theta)
            assert hermitian_inner(rot * x, rot * y) == pytest.approx(
                hermitian_inner(x, y), rel=1e-12
            )
            plain = np.sum((rot * x) * (rot * y))
            assert plain == pytest.approx(np.exp(2j * theta) * np.sum(x * y), rel=1e-10)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            hermitian_inner(np.ones(3, dtype=complex), np.ones(4, dtype=complex))


class TestComplexLayerNorm:
    def test_output_statistics(self, rng):
        # Per location: zero complex mean and unit pooled variance before
        # the affine part. Inputs drawn wide enough that the 1e-5 variance
        # floor perturbs the statistic by less than 1e-6.
        c = 64
        f = 3.0 * (rng.standard_normal((8, 8, c)) + 1j * rng.standard_normal((8, 8, c)))
        out = complex_layer_norm(f, np.ones(c, dtype=complex), np.zeros(c, dtype=complex))
        mean = out.mean(axis=-1)
        assert np.max(np.abs(mean)) < 1e-12
        var = np.mean(out.real**2 + out.imag**2, axis=-1)
        assert np.max(np.abs(var - 1.0)) < 1e-6

    def test_affine_applied(self, rng):
        c = 8
        f = rng.standard_normal((4, 4, c)) + 1j * rng.standard_normal((4, 4, c))
        gamma = rng.standard_normal(c) + 1j * rng.standard_normal(c)
        beta = rng.standard_normal(c) + 1j * rng.standard_normal(c)
        base = complex_layer_norm(f, np.ones(c, dtype=complex), np.zeros(c, dtype=complex))
        out = complex_layer_norm(f, gamma, beta)
        assert np.allclose(out, base * gamma + beta, atol=1e-12)

    def test_phase_equivariance_pre_affine(self, rng):
        # Rotating the input rotates the normalized output by the same
        # phase: mean and pooled variance are rotation invariant.
        c = 16
        f = rng.standard_normal((4, 4, c)) + 1j * rng.standard_normal((4, 4, c))
        rot = np.exp(1j * 0.7)
        a = complex_layer_norm(rot * f, np.ones(c, dtype=complex), np.zeros(c, dtype=complex))
        b = complex_layer_norm(f, np.ones(c, dtype=complex), np.zeros(c, dtype=complex))
        assert np.allclose(a, rot * b, atol=1e-12)


class TestBilinearSample:
    def test_exact_at_grid_points(self, rng):
        f = rng.standard_normal((6, 7)) + 1j * rng.standard_normal((6, 7))
        coords = np.array([[0.0, 0.0], [2.0, 3.0], [5.0, 6.0]])
        out = bilinear_sample(f, coords)
        assert np.allclose(out, [f[0, 0], f[2, 3], f[5, 6]], atol=1e-14)

    def test_interpolates_linear_ramp(self):
        # Bilinear interpolation reproduces any function linear in row and
        # column exactly.
        rr, cc = np.meshgrid(np.arange(8.0), np.arange(9.0), indexing="ij")
        f = 2.0 * rr - 0.5 * cc + 1.0
        rng = np.random.default_rng(7)
        coords = np.column_stack(
            [rng.uniform(0, 7, size=50), rng.uniform(0, 8, size=50)]
        )
        out = bilinear_sample(f, coords)
        expect = 2.0 * coords[:, 0] - 0.5 * coords[:, 1] + 1.0
        assert np.allclose(out, expect, atol=1e-12)

    def test_clamps_out_of_range(self, rng):
        f = rng.standard_normal((4, 4))
        out = bilinear_sample(f, np.array([[-3.0, 1.0], [1.0, 9.0], [-1.0, -1.0]]))
        assert out[0] == pytest.approx(f[0, 1])
        assert out[1] == pytest.approx(f[1, 3])
        assert out[2] == pytest.approx(f[0, 0])

    def test_channel_axis(self, rng):
        f = rng.standard_normal((5, 5, 3)) + 1j * rng.standard_normal((5, 5, 3))
        coords = np.array([[1.5, 2.5]])
        out = bilinear_sample(f, coords)
        assert out.shape == (1, 3)
        expect = 0.25 * (f[1, 2] + f[1, 3] + f[2, 2] + f[2, 3])
        assert np.allclose(out[0], expect, atol=1e-13)

    def test_rejects_bad_coord_shape(self, rng):
        with pytest.raises(ValueError):
            bilinear_sample(np.ones((4, 4)), np.zeros((3, 3)))
