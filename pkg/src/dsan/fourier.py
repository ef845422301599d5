"""Power-of-two 2-d FFT for the frequency-domain loss.

Iterative radix-2 Cooley-Tukey, vectorized over leading axes. The forward
transform is the unnormalized DFT; the inverse divides by H*W. Sizes must be
powers of two; ``pad_to_pow2`` is the explicit escape hatch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor

__all__ = ["ComplexSpectrum", "fft2d", "ifft2d", "pad_to_pow2", "next_pow2"]

_BITREV_CACHE: dict[int, np.ndarray] = {}


def next_pow2(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _bitrev(n: int) -> np.ndarray:
    idx = _BITREV_CACHE.get(n)
    if idx is None:
        bits = n.bit_length() - 1
        idx = np.zeros(n, dtype=np.intp)
        for i in range(n):
            r = 0
            v = i
            for _ in range(bits):
                r = (r << 1) | (v & 1)
                v >>= 1
            idx[i] = r
        _BITREV_CACHE[n] = idx
    return idx


def _fft_last_axis(a: np.ndarray, inverse: bool) -> np.ndarray:
    """Radix-2 FFT along the last axis of a complex array. No normalization."""
    n = a.shape[-1]
    if not _is_pow2(n):
        raise ShapeError(f"FFT length {n} is not a power of two")
    if n == 1:
        return a.copy()
    a = a[..., _bitrev(n)]
    sign = 2j if inverse else -2j
    size = 2
    while size <= n:
        half = size // 2
        tw = np.exp(sign * np.pi * np.arange(half) / size).astype(a.dtype)
        blocks = a.reshape(a.shape[:-1] + (n // size, size))
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(a.shape)
        size *= 2
    return a


def _fft2_complex(x: np.ndarray, inverse: bool = False) -> np.ndarray:
    """2-d transform over the last two axes of a complex array."""
    y = _fft_last_axis(x, inverse)
    y = _fft_last_axis(y.swapaxes(-1, -2), inverse).swapaxes(-1, -2)
    return np.ascontiguousarray(y)


def _complex_dtype(real_dtype) -> np.dtype:
    return np.dtype(np.complex64) if np.dtype(real_dtype) == np.float32 else np.dtype(np.complex128)


@dataclass
class ComplexSpectrum:
    """Per-channel 2-d spectrum: separate real and imaginary buffers."""

    shape: tuple[int, int, int, int]
    real: np.ndarray
    imag: np.ndarray

    def __post_init__(self):
        want = int(np.prod(self.shape))
        if self.real.size != want or self.imag.size != want:
            raise ShapeError("real/imag buffer length must equal product(shape)")

    def to_complex(self) -> np.ndarray:
        return (self.real + 1j * self.imag).reshape(self.shape)

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.real, self.imag).reshape(self.shape)


def fft2d(x: Tensor | np.ndarray) -> ComplexSpectrum:
    """Unnormalized forward DFT of each channel of an NCHW tensor.

    H and W must be powers of two; pad explicitly with ``pad_to_pow2`` first.
    """
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    if data.ndim != 4:
        raise ShapeError("fft2d expects a 4-d NCHW tensor")
    N, C, H, W = data.shape
    if not (_is_pow2(H) and _is_pow2(W)):
        raise ShapeError(
            f"fft2d requires power-of-two spatial dims, got {H}x{W}; use pad_to_pow2"
        )
    spec = _fft2_complex(data.astype(_complex_dtype(data.dtype)))
    return ComplexSpectrum((N, C, H, W), np.ascontiguousarray(spec.real), np.ascontiguousarray(spec.imag))


def ifft2d(spec: ComplexSpectrum) -> Tensor:
    """Inverse DFT with 1/(H*W) normalization; returns the real part."""
    z = spec.to_complex()
    H, W = spec.shape[2], spec.shape[3]
    out = _fft2_complex(z, inverse=True) / (H * W)
    return Tensor(np.ascontiguousarray(out.real))


def pad_to_pow2(x: Tensor | np.ndarray) -> tuple[np.ndarray, tuple[int, int]]:
    """Zero-pad H and W up to the next powers of two.

    Returns the padded array and the original (H, W) for cropping back.
    """
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    if data.ndim != 4:
        raise ShapeError("pad_to_pow2 expects a 4-d NCHW tensor")
    H, W = data.shape[2], data.shape[3]
    Hp, Wp = next_pow2(H), next_pow2(W)
    if (Hp, Wp) == (H, W):
        return data, (H, W)
    return np.pad(data, ((0, 0), (0, 0), (0, Hp - H), (0, Wp - W))), (H, W)
