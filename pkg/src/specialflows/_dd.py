"""Double-double kernels for circle positions.

A position on the circle is stored as an unevaluated pair ``hi + lo`` with
``|lo| <= ulp(hi)/2``.  All routines work on numpy arrays (or scalars) and
return normalised pairs reduced into [0, 1).
"""

from __future__ import annotations

import numpy as np

_TWO53 = float(2**53)
_MASK53 = (1 << 53) - 1


def two_sum(a, b):
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def quick_two_sum(a, b):
    s = a + b
    err = b - (s - a)
    return s, err


def reduce_mod1(hi, lo):
    """Renormalise ``hi + lo`` and reduce it into [0, 1)."""
    hi, lo = quick_two_sum(*two_sum(hi, lo))
    fl = np.floor(hi)
    hi = hi - fl  # exact for |hi| < 2**52
    hi, lo = two_sum(hi, lo)
    # exact tests on the pair: a value just below 1 may be stored as (1.0, -tiny)
    ge1 = (hi > 1.0) | ((hi == 1.0) & (lo >= 0.0))
    lt0 = (hi < 0.0) | ((hi == 0.0) & (lo < 0.0))
    adj = np.where(ge1, -1.0, np.where(lt0, 1.0, 0.0))
    s, e = two_sum(hi, adj)
    return quick_two_sum(s, e + lo)


def add_mod1(ahi, alo, bhi, blo):
    s, e = two_sum(ahi, bhi)
    e = e + (alo + blo)
    return reduce_mod1(s, e)


def sub_mod1(ahi, alo, bhi, blo):
    return add_mod1(ahi, alo, -bhi, -blo)


def from_fixed(v: int, bits: int) -> tuple[float, float]:
    """Split a ``bits``-bit fixed-point fraction into a double-double pair."""
    if bits >= 106:
        top = v >> (bits - 106)
    else:
        top = v << (106 - bits)
    hi = float(top >> 53) / _TWO53
    lo = float(top & _MASK53) / (_TWO53 * _TWO53)
    return hi, lo


def fixed_table(step: int, bits: int, count: int, start: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Double-double values of ``{start + j*step}`` for j < count (fixed point).

    The accumulation is done on exact Python integers so every entry is the
    truncation of the exact fixed-point value.
    """
    mask = (1 << bits) - 1
    shift = bits - 106
    hi = np.empty(count)
    lo = np.empty(count)
    v = start & mask
    step &= mask
    inv53 = 1.0 / _TWO53
    inv106 = inv53 * inv53
    if shift >= 0:
        for j in range(count):
            top = v >> shift
            hi[j] = (top >> 53) * inv53
            lo[j] = (top & _MASK53) * inv106
            v = (v + step) & mask
    else:
        for j in range(count):
            top = v << (-shift)
            hi[j] = (top >> 53) * inv53
            lo[j] = (top & _MASK53) * inv106
            v = (v + step) & mask
    return hi, lo
