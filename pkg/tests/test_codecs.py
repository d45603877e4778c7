import numpy as np
import numpy.testing as npt
import pytest

from collenc.codecs import (
    SparseSpectrum,
    SparseWavelet,
    fft_compress,
    fft_decompress,
    fft_mse_from_spectrum,
    haar2_forward,
    haar2_inverse,
    hermitian_partner,
    load_code,
    pad_for_levels,
    save_code,
    topk_stable,
    wavelet_compress,
    wavelet_decompress,
    wavelet_levels_for,
)


def mse(a, b):
    return float(np.mean((np.asarray(a) - np.asarray(b)) ** 2))


class TestTopK:
    def test_plain_selection(self):
        npt.assert_array_equal(topk_stable(np.array([5.0, 1.0, 9.0, 2.0]), 2), [0, 2])

    def test_ties_prefer_lower_index(self):
        npt.assert_array_equal(topk_stable(np.array([1.0, 3.0, 3.0, 2.0]), 2), [1, 2])
        npt.assert_array_equal(topk_stable(np.array([2.0, 2.0, 2.0]), 2), [0, 1])

    def test_k_clamped(self):
        npt.assert_array_equal(topk_stable(np.array([1.0, 2.0]), 10), [0, 1])

    def test_k_zero(self):
        assert len(topk_stable(np.array([1.0, 2.0]), 0)) == 0

    def test_prefix_property(self):
        rng = np.random.default_rng(0)
        m = rng.random(100)
        small = set(topk_stable(m, 10))
        assert small <= set(topk_stable(m, 25))


class TestHermitianPartner:
    def test_hand_computed_4x4(self):
        p = hermitian_partner(4, 4)
        assert p[5] == 15  # (1,1) <-> (3,3)
        assert p[1] == 3   # (0,1) <-> (0,3)
        for self_bin in (0, 2, 8, 10):  # DC and Nyquist bins
            assert p[self_bin] == self_bin

    def test_involution(self):
        for h, w in [(4, 4), (3, 5), (8, 6)]:
            p = hermitian_partner(h, w)
            npt.assert_array_equal(p[p], np.arange(h * w))

    def test_conjugate_symmetry_of_real_input(self):
        rng = np.random.default_rng(1)
        img = rng.random((6, 8))
        F = np.fft.fft2(img).ravel()
        p = hermitian_partner(6, 8)
        npt.assert_allclose(F, np.conj(F[p]), atol=1e-9)


class TestFftCodec:
    def test_constant_image_needs_one_bin(self):
        img = np.full((8, 8), 3.25)
        out = fft_decompress(fft_compress(img, 2))
        npt.assert_allclose(out, img, atol=1e-12)

    def test_single_cosine_needs_one_bin(self):
        h, w = 8, 16
        v, u = np.mgrid[0:h, 0:w]
        img = np.cos(2 * np.pi * (3 * u / w + v / h))
        code = fft_compress(img, 2)
        assert len(code.indices) == 1
        npt.assert_allclose(fft_decompress(code), img, atol=1e-12)

    def test_lossless_when_budget_covers_everything(self):
        rng = np.random.default_rng(2)
        img = rng.random((8, 8))
        out = fft_decompress(fft_compress(img, 2 * 64))
        npt.assert_allclose(out, img, atol=1e-12)

    def test_parseval_energy_accounting(self):
        rng = np.random.default_rng(3)
        img = rng.random((16, 16))
        code = fft_compress(img, 20)
        actual = mse(img, fft_decompress(code))
        predicted = fft_mse_from_spectrum(img, code)
        npt.assert_allclose(actual, predicted, rtol=1e-9)

    def test_error_monotone_in_budget(self):
        rng = np.random.default_rng(4)
        img = rng.random((16, 16))
        errs = [mse(img, fft_decompress(fft_compress(img, b)))
                for b in (2, 4, 8, 16, 32, 64, 128, 256, 512)]
        assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))

    def test_kept_sets_are_nested(self):
        rng = np.random.default_rng(5)
        img = rng.random((12, 12))
        small = set(fft_compress(img, 16).indices)
        assert small <= set(fft_compress(img, 32).indices)

    def test_output_is_real_float64(self):
        rng = np.random.default_rng(6)
        out = fft_decompress(fft_compress(rng.random((6, 6)), 8))
        assert out.dtype == np.float64

    def test_budget_validation(self):
        img = np.ones((4, 4))
        with pytest.raises(ValueError):
            fft_compress(img, 1)
        with pytest.raises(ValueError):
            fft_compress(img, 2.5)

    def test_rejects_bad_images(self):
        with pytest.raises(ValueError):
            fft_compress(np.ones((2, 2, 2)), 4)
        with pytest.raises(ValueError):
            fft_compress(np.array([[np.nan, 1.0]]), 4)


class TestHaarTransform:
    def test_hand_computed_2x2(self):
        out = haar2_forward(np.array([[1.0, 2.0], [3.0, 4.0]]), levels=1)
        npt.assert_allclose(out, [[5.0, -1.0], [-2.0, 0.0]], atol=1e-12)

    def test_constant_image_concentrates_in_ll(self):
        img = np.full((8, 8), 2.0)
        out = haar2_forward(img, levels=3)
        assert out[0, 0] == pytest.approx(16.0)  # 2 * sqrt(64)
        out[0, 0] = 0.0
        npt.assert_allclose(out, 0.0, atol=1e-12)

    def test_orthonormal_energy_preserved(self):
        rng = np.random.default_rng(7)
        img = rng.random((32, 32))
        coeffs = haar2_forward(img, levels=5)
        npt.assert_allclose(np.sum(coeffs**2), np.sum(img**2), rtol=1e-12)

    def test_roundtrip_exact(self):
        rng = np.random.default_rng(8)
        img = rng.random((16, 24))
        for levels in (1, 2, 3):
            back = haar2_inverse(haar2_forward(img, levels), levels)
            npt.assert_allclose(back, img, atol=1e-12)

    def test_rejects_indivisible_sides(self):
        with pytest.raises(ValueError):
            haar2_forward(np.ones((6, 8)), levels=2)


class TestWaveletHelpers:
    def test_default_levels(self):
        assert wavelet_levels_for((60, 80)) == 5
        assert wavelet_levels_for((64, 64)) == 6
        assert wavelet_levels_for((32, 32)) == 5
        assert wavelet_levels_for((1, 1)) == 1

    def test_padding_shape_and_content(self):
        img = np.arange(35, dtype=np.float64).reshape(5, 7)
        padded = pad_for_levels(img, 3)
        assert padded.shape == (8, 8)
        npt.assert_array_equal(padded[:5, :7], img)
        # bottom/right replicate the edge
        npt.assert_array_equal(padded[5:, :7], np.tile(img[4], (3, 1)))
        npt.assert_array_equal(padded[:5, 7], img[:, 6])

    def test_no_padding_when_divisible(self):
        img = np.ones((8, 8))
        assert pad_for_levels(img, 3) is img


class TestWaveletCodec:
    def test_constant_image_single_coefficient(self):
        img = np.full((16, 16), 1.5)
        code = wavelet_compress(img, 1)
        npt.assert_allclose(wavelet_decompress(code), img, atol=1e-12)

    def test_lossless_with_full_budget(self):
        rng = np.random.default_rng(9)
        img = rng.random((60, 80))  # padded internally to 64x96
        code = wavelet_compress(img, 64 * 96)
        npt.assert_allclose(wavelet_decompress(code), img, atol=1e-12)

    def test_parseval_without_padding(self):
        rng = np.random.default_rng(10)
        img = rng.random((16, 16))
        levels = wavelet_levels_for(img.shape)
        coeffs = haar2_forward(img, levels).ravel()
        code = wavelet_compress(img, 40)
        kept = np.zeros(coeffs.size, dtype=bool)
        kept[code.indices] = True
        predicted = float(np.sum(coeffs[~kept] ** 2)) / img.size
        actual = mse(img, wavelet_decompress(code))
        npt.assert_allclose(actual, predicted, rtol=1e-9)

    def test_error_monotone_in_budget(self):
        rng = np.random.default_rng(11)
        img = rng.random((32, 32))
        errs = [mse(img, wavelet_decompress(wavelet_compress(img, b)))
                for b in (1, 2, 4, 8, 16, 64, 256, 1024)]
        assert all(b <= a + 1e-15 for a, b in zip(errs, errs[1:]))

    def test_kept_sets_are_nested(self):
        rng = np.random.default_rng(12)
        img = rng.random((16, 16))
        small = set(wavelet_compress(img, 8).indices)
        assert small <= set(wavelet_compress(img, 16).indices)

    def test_explicit_levels_respected(self):
        img = np.random.default_rng(13).random((32, 32))
        code = wavelet_compress(img, 10, levels=2)
        assert code.levels == 2
        npt.assert_allclose(
            wavelet_decompress(wavelet_compress(img, 32 * 32, levels=2)), img,
            atol=1e-12,
        )

    def test_budget_validation(self):
        with pytest.raises(ValueError):
            wavelet_compress(np.ones((4, 4)), 0)


class TestSerialization:
    def roundtrip(self, code, tmp_path):
        p = tmp_path / "code.bin"
        save_code(p, code)
        return load_code(p)

    def test_fft_roundtrip(self, tmp_path):
        rng = np.random.default_rng(14)
        code = fft_compress(rng.random((12, 16)), 24)
        back = self.roundtrip(code, tmp_path)
        assert isinstance(back, SparseSpectrum)
        assert (back.height, back.width, back.budget) == (12, 16, 24)
        npt.assert_array_equal(back.indices, code.indices)
        npt.assert_array_equal(back.values, code.values)
        npt.assert_array_equal(fft_decompress(back), fft_decompress(code))

    def test_wavelet_roundtrip(self, tmp_path):
        rng = np.random.default_rng(15)
        code = wavelet_compress(rng.random((20, 20)), 17)
        back = self.roundtrip(code, tmp_path)
        assert isinstance(back, SparseWavelet)
        assert back.levels == code.levels
        npt.assert_array_equal(back.indices, code.indices)
        npt.assert_array_equal(back.values, code.values)

    def test_truncation_detected(self, tmp_path):
        code = fft_compress(np.random.default_rng(16).random((8, 8)), 16)
        p = tmp_path / "code.bin"
        save_code(p, code)
        p.write_bytes(p.read_bytes()[:-3])
        with pytest.raises(ValueError, match="truncated"):
            load_code(p)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "junk.bin"
        p.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(ValueError, match="magic"):
            load_code(p)

    def test_wrong_type_rejected(self, tmp_path):
        with pytest.raises(TypeError):
            save_code(tmp_path / "x.bin", object())
