"""Spatial DFT between antenna domain and beamspace.

The exact path is the unitary DFT (forward kernel e^{-j 2 pi m n / B}, natural
output order, 1/sqrt(B) inside the transform). The quantized path mirrors a
fully-unrolled radix-4 decimation-in-time FFT whose twiddle factors are
rounded to a low-resolution fixed-point format; the radix-4 butterfly factors
(+-1, +-j) stay exact, as they cost no multiplier in hardware.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .numerics import TWIDDLE_FMT, QFormat, dequantize, quantize_raw


@dataclass(frozen=True)
class TwiddleConfig:
    """Transform flavor: exact unitary DFT, or radix-4 with quantized twiddles."""

    exact: bool = True
    twiddle_fmt: QFormat = field(default=TWIDDLE_FMT)


def _is_power_of_4(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0 and (n.bit_length() - 1) % 2 == 0


def dft_matrix(B: int) -> np.ndarray:
    """Unitary DFT matrix F with F[m, n] = e^{-j 2 pi m n / B} / sqrt(B)."""
    if B < 1:
        raise ValueError("B must be >= 1")
    n = np.arange(B)
    # reduce the index product mod B before exponentiating to keep angles small
    phase = (np.outer(n, n) % B).astype(np.float64)
    return np.exp(-2j * np.pi * phase / B) / np.sqrt(B)


@lru_cache(maxsize=None)
def _quantized_twiddles(n: int, fmt: QFormat):
    k = np.arange(n // 4)
    out = []
    for p in (1, 2, 3):
        w = np.exp(-2j * np.pi * ((p * k) % n) / n)
        wq = dequantize(quantize_raw(w.real, fmt), fmt) + 1j * dequantize(quantize_raw(w.imag, fmt), fmt)
        wq.setflags(write=False)
        out.append(wq)
    return tuple(out)


def _radix4(x: np.ndarray, fmt: QFormat) -> np.ndarray:
    n = x.shape[0]
    if n == 1:
        return x.astype(np.complex128)
    f0 = _radix4(x[0::4], fmt)
    f1 = _radix4(x[1::4], fmt)
    f2 = _radix4(x[2::4], fmt)
    f3 = _radix4(x[3::4], fmt)
    w1, w2, w3 = _quantized_twiddles(n, fmt)
    if x.ndim > 1:
        shape = (-1,) + (1,) * (x.ndim - 1)
        w1, w2, w3 = w1.reshape(shape), w2.reshape(shape), w3.reshape(shape)
    t0, t1, t2, t3 = f0, w1 * f1, w2 * f2, w3 * f3
    return np.concatenate(
        [
            t0 + t1 + t2 + t3,
            t0 - 1j * t1 - t2 + 1j * t3,
            t0 - t1 + t2 - t3,
            t0 + 1j * t1 - t2 - 1j * t3,
        ],
        axis=0,
    )


def to_beamspace(y: np.ndarray, cfg: TwiddleConfig = TwiddleConfig()) -> np.ndarray:
    """Transform antenna-domain vector(s) to beamspace along axis 0.

    Accepts shape (B,) or (B, N). Exact mode matches ``dft_matrix(B) @ y`` to
    machine precision; quantized mode runs the radix-4 FFT with rounded
    twiddles and requires B to be a power of 4. Both scale by 1/sqrt(B).
    """
    y = np.asarray(y)
    B = y.shape[0]
    if cfg.exact:
        return np.fft.fft(y, axis=0) / np.sqrt(B)
    if not _is_power_of_4(B):
        raise ValueError(f"radix-4 transform needs a power-of-4 length, got {B}")
    return _radix4(y, cfg.twiddle_fmt) / np.sqrt(B)
