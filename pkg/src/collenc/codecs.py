"""Sparse frequency-domain codecs used as classical compression baselines.

Two codecs with a shared budget currency of real scalars:

  - FFT: keep the `budget // 2` largest-magnitude bins of the unnormalized
    2-D DFT, counting one retained complex bin as two scalars. Only one
    bin per conjugate pair is stored; the partner is restored by symmetry.
  - Wavelet: orthonormal Haar analysis (multilevel, separable), keeping
    the `budget` largest-magnitude coefficients, one scalar each.

Selection is a stable top-k: ties in magnitude break toward the lower
flat index, so the kept set for a smaller budget is always a prefix of
the kept set for a larger one. Budgets large enough to keep everything
degrade to lossless round-trips.
"""

import struct
from dataclasses import dataclass

import numpy as np

_SQRT2 = np.sqrt(2.0)

_FFT_MAGIC = b"SPF1"
_WAV_MAGIC = b"SPW1"


@dataclass
class SparseSpectrum:
    """Top-k DFT bins of an image: flat indices ky*W + kx, complex values."""

    height: int
    width: int
    budget: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.indices.shape != self.values.shape:
            raise ValueError("indices and values must align")


@dataclass
class SparseWavelet:
    """Top-k Haar coefficients; indices are flat positions in the padded
    coefficient plane (original image is the top-left crop)."""

    height: int
    width: int
    budget: int
    levels: int
    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.indices.shape != self.values.shape:
            raise ValueError("indices and values must align")

    @property
    def padded_shape(self):
        step = 1 << self.levels
        return (-(-self.height // step) * step, -(-self.width // step) * step)


def _check_image(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ValueError("expected a non-empty 2-D image")
    if not np.all(np.isfinite(img)):
        raise ValueError("image must be finite")
    return img


def topk_stable(magnitudes: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest values; ties prefer the lower index.

    Sorted ascending by index on return. k is clamped to the array size.
    """
    mags = np.asarray(magnitudes)
    k = min(int(k), mags.size)
    if k <= 0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((np.arange(mags.size), -mags))
    return np.sort(order[:k]).astype(np.int64)


# ---------------------------------------------------------------------------
# FFT codec
# ---------------------------------------------------------------------------


def hermitian_partner(height: int, width: int) -> np.ndarray:
    """Flat index of the conjugate-symmetric partner of every DFT bin."""
    ky, kx = np.divmod(np.arange(height * width), width)
    return ((-ky) % height) * width + ((-kx) % width)


def fft_compress(image, budget: int) -> SparseSpectrum:
    """Keep the budget // 2 largest-magnitude unique DFT bins.

    budget counts real scalars, two per retained complex bin; it must be
    at least 2. One bin per conjugate pair is eligible (the one with the
    smaller flat index), so magnitudes of paired bins are considered once.
    """
    img = _check_image(image)
    if int(budget) != budget or budget < 2:
        raise ValueError("budget must be an integer >= 2")
    h, w = img.shape
    spectrum = np.fft.fft2(img).ravel()
    partner = hermitian_partner(h, w)
    rep = np.nonzero(np.arange(h * w) <= partner)[0]
    pick = topk_stable(np.abs(spectrum[rep]), int(budget) // 2)
    kept = rep[pick]
    return SparseSpectrum(h, w, int(budget), kept, spectrum[kept])


def fft_decompress(code: SparseSpectrum) -> np.ndarray:
    """Inverse of fft_compress: scatter, mirror conjugates, inverse DFT."""
    h, w = code.height, code.width
    spectrum = np.zeros(h * w, dtype=np.complex128)
    spectrum[code.indices] = code.values
    partner = hermitian_partner(h, w)[code.indices]
    mirrored = partner != code.indices
    spectrum[partner[mirrored]] = np.conj(code.values[mirrored])
    return np.fft.ifft2(spectrum.reshape(h, w)).real


def fft_mse_from_spectrum(image, code: SparseSpectrum) -> float:
    """Reconstruction MSE predicted from discarded spectral energy.

    With the unnormalized forward transform, dropping a set S of bins
    costs sum_S |F_k|^2 / (H W)^2 in image MSE.
    """
    img = _check_image(image)
    h, w = img.shape
    spectrum = np.fft.fft2(img).ravel()
    kept = np.zeros(h * w, dtype=bool)
    kept[code.indices] = True
    kept[hermitian_partner(h, w)[code.indices]] = True
    discarded = np.abs(spectrum[~kept]) ** 2
    return float(discarded.sum()) / (h * w) ** 2


# ---------------------------------------------------------------------------
# Haar wavelet codec
# ---------------------------------------------------------------------------


def wavelet_levels_for(shape) -> int:
    """Default decomposition depth: floor(log2(min side))."""
    side = min(int(shape[0]), int(shape[1]))
    if side < 1:
        raise ValueError("empty image")
    return max(int(np.floor(np.log2(side))), 1) if side > 1 else 1


def pad_for_levels(image, levels: int) -> np.ndarray:
    """Edge-replicate on the bottom/right to multiples of 2**levels."""
    img = np.asarray(image, dtype=np.float64)
    step = 1 << levels
    ph = -img.shape[0] % step
    pw = -img.shape[1] % step
    if ph == 0 and pw == 0:
        return img
    return np.pad(img, ((0, ph), (0, pw)), mode="edge")


def haar2_forward(image, levels: int) -> np.ndarray:
    """Multilevel orthonormal Haar analysis, pyramid packed in place.

    The approximation lives in the top-left (H/2^L, W/2^L) corner; each
    level's detail bands occupy the remaining L-shape. Both sides must be
    divisible by 2**levels.
    """
    out = np.array(image, dtype=np.float64, copy=True)
    h, w = out.shape
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if h % (1 << levels) or w % (1 << levels):
        raise ValueError("image sides must be divisible by 2**levels")
    for _ in range(levels):
        block = out[:h, :w]
        lo = (block[:, 0::2] + block[:, 1::2]) / _SQRT2
        hi = (block[:, 0::2] - block[:, 1::2]) / _SQRT2
        block = np.concatenate([lo, hi], axis=1)
        lo = (block[0::2, :] + block[1::2, :]) / _SQRT2
        hi = (block[0::2, :] - block[1::2, :]) / _SQRT2
        out[:h, :w] = np.concatenate([lo, hi], axis=0)
        h //= 2
        w //= 2
    return out


def haar2_inverse(coeffs, levels: int) -> np.ndarray:
    """Exact inverse of haar2_forward."""
    out = np.array(coeffs, dtype=np.float64, copy=True)
    H, W = out.shape
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if H % (1 << levels) or W % (1 << levels):
        raise ValueError("coefficient sides must be divisible by 2**levels")
    for lvl in range(levels - 1, -1, -1):
        h = H >> lvl
        w = W >> lvl
        block = out[:h, :w]
        top, bottom = block[: h // 2, :], block[h // 2 :, :]
        inter = np.empty((h, w))
        inter[0::2, :] = (top + bottom) / _SQRT2
        inter[1::2, :] = (top - bottom) / _SQRT2
        left, right = inter[:, : w // 2], inter[:, w // 2 :]
        block[:, 0::2] = (left + right) / _SQRT2
        block[:, 1::2] = (left - right) / _SQRT2
    return out


def wavelet_compress(image, budget: int, levels: int | None = None) -> SparseWavelet:
    """Keep the `budget` largest-magnitude Haar coefficients (one scalar each)."""
    img = _check_image(image)
    if int(budget) != budget or budget < 1:
        raise ValueError("budget must be a positive integer")
    if levels is None:
        levels = wavelet_levels_for(img.shape)
    padded = pad_for_levels(img, levels)
    coeffs = haar2_forward(padded, levels).ravel()
    kept = topk_stable(np.abs(coeffs), int(budget))
    return SparseWavelet(
        img.shape[0], img.shape[1], int(budget), levels, kept, coeffs[kept]
    )


def wavelet_decompress(code: SparseWavelet) -> np.ndarray:
    """Inverse of wavelet_compress, cropped back to the original size."""
    ph, pw = code.padded_shape
    coeffs = np.zeros(ph * pw)
    coeffs[code.indices] = code.values
    full = haar2_inverse(coeffs.reshape(ph, pw), code.levels)
    return full[: code.height, : code.width]


def decompress(code) -> np.ndarray:
    """Reconstruct from either sparse code type."""
    if isinstance(code, SparseSpectrum):
        return fft_decompress(code)
    if isinstance(code, SparseWavelet):
        return wavelet_decompress(code)
    raise TypeError(f"not a sparse code: {type(code).__name__}")


# ---------------------------------------------------------------------------
# Serialization: little-endian, magic + header + index block + value block
# ---------------------------------------------------------------------------


def _encode(code) -> bytes:
    if isinstance(code, SparseSpectrum):
        head = struct.pack(
            "<4sIIII", _FFT_MAGIC, code.height, code.width, code.budget,
            len(code.indices),
        )
        vals = code.values.astype("<c16").tobytes()
    elif isinstance(code, SparseWavelet):
        head = struct.pack(
            "<4sIIIII", _WAV_MAGIC, code.height, code.width, code.budget,
            code.levels, len(code.indices),
        )
        vals = code.values.astype("<f8").tobytes()
    else:
        raise TypeError(f"not a sparse code: {type(code).__name__}")
    return head + code.indices.astype("<u4").tobytes() + vals


def _decode(raw: bytes):
    if len(raw) < 4:
        raise ValueError("truncated sparse code")
    magic = raw[:4]
    if magic == _FFT_MAGIC:
        head_fmt, value_dtype, extra = "<4sIIII", "<c16", 0
    elif magic == _WAV_MAGIC:
        head_fmt, value_dtype, extra = "<4sIIIII", "<f8", 1
    else:
        raise ValueError("unrecognized sparse code magic")
    head_size = struct.calcsize(head_fmt)
    if len(raw) < head_size:
        raise ValueError("truncated sparse code")
    fields = struct.unpack(head_fmt, raw[:head_size])
    count = fields[-1]
    body = raw[head_size:]
    idx_bytes = 4 * count
    val_bytes = np.dtype(value_dtype).itemsize * count
    if len(body) != idx_bytes + val_bytes:
        raise ValueError("truncated sparse code")
    indices = np.frombuffer(body[:idx_bytes], dtype="<u4").astype(np.int64)
    values = np.frombuffer(body[idx_bytes:], dtype=value_dtype)
    if magic == _FFT_MAGIC:
        _, h, w, budget, _ = fields
        return SparseSpectrum(h, w, budget, indices, values)
    _, h, w, budget, levels, _ = fields
    return SparseWavelet(h, w, budget, levels, indices, values)


def save_code(path, code) -> None:
    with open(path, "wb") as fh:
        fh.write(_encode(code))


def load_code(path):
    with open(path, "rb") as fh:
        return _decode(fh.read())
