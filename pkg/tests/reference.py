"""Independent oracles for the test suite.

Everything here is deliberately naive: scalar loops, Python integers, direct
formulas. Nothing imports the production kernels it checks.
"""

from __future__ import annotations

import math
from statistics import NormalDist

import numpy as np


def q_func(x: float) -> float:
    """Gaussian tail probability Q(x)."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def q_func_inv(p: float) -> float:
    return -NormalDist().inv_cdf(p)


def nearest_representable(x: float, total_bits: int, frac_bits: int):
    """Exhaustive scan of a format's value set for the nearest (ties to even raw)."""
    raws = range(-(1 << (total_bits - 1)), (1 << (total_bits - 1)))
    scale = 1 << frac_bits
    best_raw = None
    best_err = None
    for raw in raws:
        err = abs(raw / scale - x)
        if best_err is None or err < best_err or (err == best_err and raw % 2 == 0):
            best_raw, best_err = raw, err
    return best_raw


def dft_oracle_matrix(B: int) -> np.ndarray:
    """Direct double-loop unitary DFT matrix."""
    F = np.empty((B, B), dtype=complex)
    for m in range(B):
        for n in range(B):
            F[m, n] = np.exp(-2j * np.pi * m * n / B)
    return F / np.sqrt(B)


def naive_dotp(w_re, w_im, cw_re, cw_im, y_re, y_im, cy_re, cy_im, save_power):
    """Enumerate all 4B real products of one row with Python integers.

    Inputs are raw integers (or floats in unquantized mode) plus the four bit
    vectors. Returns (acc_re, acc_im, executed).
    """
    acc_re = 0
    acc_im = 0
    executed = 0
    B = len(y_re)
    for b in range(B):
        # p1 = wR*yR, p2 = wI*yI, p3 = wR*yI, p4 = wI*yR
        products = [
            (w_re[b], y_re[b], cw_re[b] and cy_re[b]),
            (w_im[b], y_im[b], cw_im[b] and cy_im[b]),
            (w_re[b], y_im[b], cw_re[b] and cy_im[b]),
            (w_im[b], y_re[b], cw_im[b] and cy_re[b]),
        ]
        vals = []
        for op_a, op_b, skip in products:
            if save_power and skip:
                vals.append(0)
            else:
                vals.append(op_a * op_b)
                executed += 1
        acc_re += vals[0] - vals[1]
        acc_im += vals[2] + vals[3]
    return acc_re, acc_im, executed


def naive_threshold_raw(tau: float, frac_bits: int) -> int:
    """Round-half-even of tau * 2^frac via the fraction's exact halves."""
    scaled = tau * (1 << frac_bits)
    floor = math.floor(scaled)
    rem = scaled - floor
    if rem > 0.5:
        return floor + 1
    if rem < 0.5:
        return floor
    return floor if floor % 2 == 0 else floor + 1


def gray_code_bits(index: int, nbits: int) -> list[int]:
    g = index ^ (index >> 1)
    return [(g >> (nbits - 1 - i)) & 1 for i in range(nbits)]


def qam_constellation(M: int, Es: float) -> dict[tuple[int, ...], complex]:
    """Every bit pattern's constellation point, built from first principles."""
    m = int(round(math.sqrt(M)))
    half = int(math.log2(M)) // 2
    scale = math.sqrt(3.0 * Es / (2.0 * (M - 1)))
    points = {}
    for i in range(m):
        for q in range(m):
            bits = tuple(gray_code_bits(i, half) + gray_code_bits(q, half))
            points[bits] = scale * complex(2 * i - (m - 1), 2 * q - (m - 1))
    return points
