"""Fixed-point arithmetic for the equalizer datapath.

All quantities use signed two's-complement Q-formats. Quantization rounds to
nearest with ties to even and saturates at the representable bounds, which is
the usual behavior of a DSP datapath front end. Multiplication is exact: the
product carries the full combined width, so accumulation never rounds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class QFormat:
    """Signed fixed-point format: ``total_bits`` wide with ``frac_bits`` fractional.

    Representable values are ``raw * 2**-frac_bits`` for raw in the
    two's-complement range of ``total_bits``.
    """

    total_bits: int
    frac_bits: int

    def __post_init__(self) -> None:
        if not 2 <= self.total_bits <= 32:
            raise ValueError(f"total_bits must be in [2, 32], got {self.total_bits}")
        if not 0 <= self.frac_bits < self.total_bits:
            raise ValueError(f"frac_bits must be in [0, total_bits), got {self.frac_bits}")

    @property
    def scale(self) -> int:
        return 1 << self.frac_bits

    @property
    def min_raw(self) -> int:
        return -(1 << (self.total_bits - 1))

    @property
    def max_raw(self) -> int:
        return (1 << (self.total_bits - 1)) - 1

    @property
    def min_value(self) -> float:
        return self.min_raw / self.scale

    @property
    def max_value(self) -> float:
        return self.max_raw / self.scale

    @property
    def step(self) -> float:
        return 1.0 / self.scale

    def __str__(self) -> str:
        return f"Q{self.total_bits}.{self.frac_bits}"


# Defaults used throughout the artifact; every one of these is configurable.
WEIGHT_FMT = QFormat(10, 9)   # equalizer weights, range just inside [-1, 1)
INPUT_FMT = QFormat(12, 9)    # receive-vector components after input scaling
TWIDDLE_FMT = QFormat(6, 4)   # low-resolution FFT twiddle factors


@dataclass(frozen=True)
class FixedScalar:
    """One fixed-point number: integer ``raw`` interpreted in format ``fmt``."""

    raw: int
    fmt: QFormat

    def __post_init__(self) -> None:
        if not self.fmt.min_raw <= self.raw <= self.fmt.max_raw:
            raise ValueError(f"raw {self.raw} out of range for {self.fmt}")

    @property
    def value(self) -> float:
        return self.raw / self.fmt.scale


@dataclass(frozen=True)
class ComplexFixed:
    """Complex value whose real and imaginary parts share one format."""

    re: FixedScalar
    im: FixedScalar

    def __post_init__(self) -> None:
        if self.re.fmt != self.im.fmt:
            raise ValueError("re and im must share one QFormat")

    @property
    def fmt(self) -> QFormat:
        return self.re.fmt

    @property
    def value(self) -> complex:
        return complex(self.re.value, self.im.value)


def quantize_raw(x, fmt: QFormat) -> np.ndarray:
    """Quantize an array of reals to raw integers (nearest-even, saturating)."""
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite sample")
    raw = np.round(x * fmt.scale)
    # Clip in the float domain: the raw bounds (<= 2**31) are float-exact.
    return np.clip(raw, fmt.min_raw, fmt.max_raw).astype(np.int64)


def quantize(x: float, fmt: QFormat) -> FixedScalar:
    """Quantize one real number; same rounding path as the array version."""
    return FixedScalar(int(quantize_raw(x, fmt)), fmt)


def dequantize(raw, fmt: QFormat) -> np.ndarray:
    """Raw integers back to floats. Exact for any format up to 52 bits."""
    return np.asarray(raw, dtype=np.float64) / fmt.scale


def fixed_mul(a: FixedScalar, b: FixedScalar) -> FixedScalar:
    """Exact product of two fixed-point scalars.

    The result format has the combined width and combined fractional bits, so
    no rounding happens here. Operand widths must stay small enough for the
    product format to be valid (total <= 32 bits).
    """
    fmt = QFormat(a.fmt.total_bits + b.fmt.total_bits, a.fmt.frac_bits + b.fmt.frac_bits)
    return FixedScalar(a.raw * b.raw, fmt)


def linf_tilde(v) -> float:
    """Componentwise max of max(|real|, |imag|) over a complex vector."""
    v = np.asarray(v)
    if v.size == 0:
        raise ValueError("empty vector")
    return float(max(np.abs(v.real).max(), np.abs(v.imag).max()))
