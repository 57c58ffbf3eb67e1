"""Bitwise convolutions over the 65536 truth tables.

``result[T] = sum(a[T1] * b[T2] for T1 op T2 == T)`` for op in AND/OR/XOR.

Fast path: OR diagonalises under the subset-sum (zeta) transform, AND under the
superset-sum transform, XOR under Walsh-Hadamard.  Their inverses cancel
heavily, and mass tables span twenty-plus orders of magnitude once the xor
rule is rare, so the transforms used by the enumerator run in double-double
arithmetic (an unevaluated sum ``hi + lo`` of two float64 arrays, ~32 digits).
Plain float64 and exact int64 variants share the same butterflies.
"""
from __future__ import annotations

from typing import NamedTuple

import numba
import numpy as np

from .logic import NUM_TABLES, NUM_VALUATIONS, Op

_SPLITTER = 134217729.0  # 2**27 + 1


class DD(NamedTuple):
    """Double-double array: the value is ``hi + lo`` with ``|lo| <= ulp(hi) / 2``."""

    hi: np.ndarray
    lo: np.ndarray

    @classmethod
    def of(cls, a) -> "DD":
        hi = np.array(a, dtype=np.float64)
        return cls(hi, np.zeros_like(hi))

    @classmethod
    def zeros(cls, n: int = NUM_TABLES) -> "DD":
        return cls(np.zeros(n), np.zeros(n))

    def value(self) -> np.ndarray:
        return self.hi + self.lo

    def copy(self) -> "DD":
        return DD(self.hi.copy(), self.lo.copy())


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


def dd_add(x: DD, y: DD) -> DD:
    s, e = _two_sum(x.hi, y.hi)
    e += x.lo
    e += y.lo
    hi = s + e
    return DD(hi, e - (hi - s))


def dd_sub(x: DD, y: DD) -> DD:
    return dd_add(x, DD(-y.hi, -y.lo))


def _split(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def dd_mul(x: DD, y: DD) -> DD:
    p = x.hi * y.hi
    a1, a2 = _split(x.hi)
    b1, b2 = _split(y.hi)
    e = ((a1 * b1 - p) + a1 * b2 + a2 * b1) + a2 * b2
    e += x.hi * y.lo + x.lo * y.hi
    hi = p + e
    return DD(hi, e - (hi - p))


def dd_scale(x: DD, c: float) -> DD:
    """Multiply by a float64 scalar without losing the low word."""
    p = x.hi * c
    a1, a2 = _split(x.hi)
    c1, c2 = _split(np.float64(c))
    e = ((a1 * c1 - p) + a1 * c2 + a2 * c1) + a2 * c2
    e += x.lo * c
    hi = p + e
    return DD(hi, e - (hi - p))


# ------------------------------------------------------------ butterflies

def _stages(n, *arrays):
    for i in range(n.bit_length() - 1):
        yield tuple(a.reshape(-1, 2, 1 << i) for a in arrays)


def _zeta(a, upper: bool, sign: int):
    a = np.array(a, copy=True)
    for (v,) in _stages(a.size, a):
        src, dst = (v[:, 0, :], v[:, 1, :]) if not upper else (v[:, 1, :], v[:, 0, :])
        if sign > 0:
            dst += src
        else:
            dst -= src
    return a


def subset_zeta(a):
    """``out[S] = sum(a[T] for T subset of S)``."""
    return _zeta(a, upper=False, sign=1)


def subset_mobius(a):
    return _zeta(a, upper=False, sign=-1)


def superset_zeta(a):
    """``out[S] = sum(a[T] for T superset of S)``."""
    return _zeta(a, upper=True, sign=1)


def superset_mobius(a):
    return _zeta(a, upper=True, sign=-1)


def walsh_hadamard(a):
    """Unnormalised WHT; applying it twice multiplies by ``len(a)``."""
    a = np.array(a, copy=True)
    for (v,) in _stages(a.size, a):
        x = v[:, 0, :].copy()
        y = v[:, 1, :]
        v[:, 0, :] += y
        np.subtract(x, y, out=y)
    return a


# Compiled double-double kernels.  numba's default (no fastmath) keeps IEEE
# semantics, which the error-free transformations rely on.

@numba.njit(cache=True)
def _dd_zeta_kernel(hi, lo, upper, sign):
    n = hi.size
    h = 1
    while h < n:
        for base in range(0, n, 2 * h):
            for j in range(base, base + h):
                if upper:
                    d, src = j, j + h
                else:
                    d, src = j + h, j
                ah, al = hi[d], lo[d]
                bh, bl = sign * hi[src], sign * lo[src]
                s = ah + bh
                bb = s - ah
                e = (ah - (s - bb)) + (bh - bb)
                e += al + bl
                x = s + e
                hi[d] = x
                lo[d] = e - (x - s)
        h *= 2


@numba.njit(cache=True)
def _dd_wht_kernel(hi, lo):
    n = hi.size
    h = 1
    while h < n:
        for base in range(0, n, 2 * h):
            for j in range(base, base + h):
                ah, al = hi[j], lo[j]
                bh, bl = hi[j + h], lo[j + h]
                s = ah + bh
                bb = s - ah
                e = (ah - (s - bb)) + (bh - bb)
                e += al + bl
                x = s + e
                hi[j] = x
                lo[j] = e - (x - s)
                s = ah - bh
                bb = s - ah
                e = (ah - (s - bb)) + (-bh - bb)
                e += al - bl
                x = s + e
                hi[j + h] = x
                lo[j + h] = e - (x - s)
        h *= 2


@numba.njit(cache=True)
def _dd_fma_kernel(acc_hi, acc_lo, xh, xl, yh, yl, c):
    """``acc += c * x * y`` elementwise, with ``c`` an exact float64."""
    split = 134217729.0
    for i in range(acc_hi.size):
        # x * y
        p = xh[i] * yh[i]
        t = split * xh[i]
        a1 = t - (t - xh[i])
        a2 = xh[i] - a1
        t = split * yh[i]
        b1 = t - (t - yh[i])
        b2 = yh[i] - b1
        e = ((a1 * b1 - p) + a1 * b2 + a2 * b1) + a2 * b2
        e += xh[i] * yl[i] + xl[i] * yh[i]
        ph = p + e
        pl = e - (ph - p)
        # times c
        if c != 1.0:
            p = ph * c
            t = split * ph
            a1 = t - (t - ph)
            a2 = ph - a1
            t = split * c
            b1 = t - (t - c)
            b2 = c - b1
            e = ((a1 * b1 - p) + a1 * b2 + a2 * b1) + a2 * b2
            e += pl * c
            ph = p + e
            pl = e - (ph - p)
        # accumulate
        s = acc_hi[i] + ph
        bb = s - acc_hi[i]
        e = (acc_hi[i] - (s - bb)) + (ph - bb)
        e += acc_lo[i] + pl
        x = s + e
        acc_hi[i] = x
        acc_lo[i] = e - (x - s)


def dd_fma(acc: DD, x: DD, y: DD, c: float = 1.0) -> None:
    """In place: ``acc += c * x * y``."""
    _dd_fma_kernel(acc.hi, acc.lo, x.hi, x.lo, y.hi, y.lo, float(c))


def _dd_zeta(x: DD, upper: bool, sign: int) -> DD:
    hi, lo = x.hi.copy(), x.lo.copy()
    _dd_zeta_kernel(hi, lo, upper, float(sign))
    return DD(hi, lo)


def _dd_wht(x: DD) -> DD:
    hi, lo = x.hi.copy(), x.lo.copy()
    _dd_wht_kernel(hi, lo)
    return DD(hi, lo)


def forward(op: Op, x):
    """Transform into the domain where ``op``-convolution is a pointwise product.

    Accepts a ``DD`` (double-double) or a plain ndarray (float64 or int64).
    """
    if isinstance(x, DD):
        if op is Op.OR:
            return _dd_zeta(x, upper=False, sign=1)
        if op is Op.AND:
            return _dd_zeta(x, upper=True, sign=1)
        return _dd_wht(x)
    if op is Op.OR:
        return subset_zeta(x)
    if op is Op.AND:
        return superset_zeta(x)
    return walsh_hadamard(x)


def inverse(op: Op, x):
    if isinstance(x, DD):
        if op is Op.OR:
            return _dd_zeta(x, upper=False, sign=-1)
        if op is Op.AND:
            return _dd_zeta(x, upper=True, sign=-1)
        y = _dd_wht(x)
        n = float(y.hi.size)  # power of two: exact
        return DD(y.hi / n, y.lo / n)
    if op is Op.OR:
        return subset_mobius(x)
    if op is Op.AND:
        return superset_mobius(x)
    y = walsh_hadamard(x)
    if np.issubdtype(y.dtype, np.integer):
        return y // y.size
    return y / y.size


# ------------------------------------------------------------ convolutions

def _as_table(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 1 or a.size & (a.size - 1) or a.size < 2:
        raise ValueError(f"{name} must be a 1-d array whose length is a power of two")
    return a


def naive_convolve(a, b, op: Op) -> np.ndarray:
    """Direct double loop over pairs of (nonzero) entries."""
    a = _as_table(a, "a")
    b = _as_table(b, "b")
    if a.size != b.size:
        raise ValueError("a and b must have the same length")
    out = np.zeros(a.size)
    jb = np.flatnonzero(b)
    wb = b[jb]
    for i in np.flatnonzero(a):
        out += np.bincount(op.apply(i, jb), weights=a[i] * wb, minlength=a.size)
    return out


def convolve(a, b, op: Op, method: str = "transform") -> np.ndarray:
    """Bitwise ``op``-convolution of two nonnegative tables.

    ``method`` is ``"transform"`` (double-double fast transforms, the default),
    ``"double"`` (the same transforms in plain float64) or ``"naive"``.
    """
    op = Op(op) if not isinstance(op, Op) else op
    if method == "naive":
        return naive_convolve(a, b, op)
    a = _as_table(a, "a")
    b = _as_table(b, "b")
    if a.size != b.size:
        raise ValueError("a and b must have the same length")
    if method == "double":
        return inverse(op, forward(op, a) * forward(op, b))
    if method == "transform":
        acc = DD.zeros(a.size)
        dd_fma(acc, forward(op, DD.of(a)), forward(op, DD.of(b)))
        return inverse(op, acc).value()
    raise ValueError(f"unknown convolution method {method!r}")


assert NUM_TABLES == 1 << NUM_VALUATIONS
