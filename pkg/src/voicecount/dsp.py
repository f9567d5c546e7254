"""Spectral kernels: an iterative radix-2 FFT and the one-sided power spectrum.

The transform is vectorized over any number of leading batch axes so a whole
stack of analysis frames goes through in one call. Lengths must be powers of
two; the feature front-end zero-pads frames up to the transform size.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import PipelineError


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@lru_cache(maxsize=32)
def _bit_reverse_indices(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    rev.flags.writeable = False
    return rev


@lru_cache(maxsize=64)
def _twiddles(m: int) -> np.ndarray:
    w = np.exp(-2j * np.pi * np.arange(m // 2) / m)
    w.flags.writeable = False
    return w


def fft_radix2(x: np.ndarray) -> np.ndarray:
    """Decimation-in-time FFT along the last axis (length must be 2^k)."""
    x = np.asarray(x)
    n = x.shape[-1]
    if not _is_pow2(n):
        raise PipelineError(f"FFT length must be a power of two, got {n}")
    # Fancy indexing yields a fresh contiguous copy, safe to update in place.
    out = np.asarray(x, dtype=np.complex128)[..., _bit_reverse_indices(n)]
    m = 2
    while m <= n:
        half = m // 2
        blocks = out.reshape(out.shape[:-1] + (n // m, m))
        odd = blocks[..., half:] * _twiddles(m)
        upper = blocks[..., :half] - odd
        blocks[..., :half] += odd
        blocks[..., half:] = upper
        m *= 2
    return out


def hann_window(n: int) -> np.ndarray:
    """Symmetric Hann taper of length n."""
    return np.hanning(n)


def power_spectrum(
    frame: np.ndarray, fft_size: int, taper: np.ndarray | None = None
) -> np.ndarray:
    """One-sided power spectrum |DFT(frame)|^2 / fft_size, bins 0..fft_size/2.

    The taper (if any) is applied before zero-padding the frame up to
    fft_size. Accepts batched frames with the frame samples on the last axis.
    """
    frame = np.asarray(frame, dtype=np.float64)
    n = frame.shape[-1]
    if not _is_pow2(fft_size):
        raise PipelineError(f"fft_size must be a power of two, got {fft_size}")
    if n > fft_size:
        raise PipelineError(f"frame length {n} exceeds fft_size {fft_size}")
    if taper is not None:
        taper = np.asarray(taper, dtype=np.float64)
        if taper.shape != (n,):
            raise PipelineError(
                f"taper length {taper.shape} does not match frame length {n}"
            )
        frame = frame * taper
    buf = np.zeros(frame.shape[:-1] + (fft_size,), dtype=np.complex128)
    buf[..., :n] = frame
    spectrum = fft_radix2(buf)
    half = spectrum[..., : fft_size // 2 + 1]
    return (half.real**2 + half.imag**2) / fft_size
