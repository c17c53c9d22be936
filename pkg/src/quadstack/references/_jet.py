"""Truncated Taylor series used to get exact high-order time derivatives.

A :class:`Jet` holds coefficients ``c[k]`` of ``sum_k c[k] h**k``; the k-th
derivative at ``h = 0`` is ``k! * c[k]``.
"""

from __future__ import annotations

from math import factorial

import numpy as np


class Jet:
    __slots__ = ("c",)

    def __init__(self, coeffs):
        self.c = np.asarray(coeffs, dtype=float)

    @property
    def order(self) -> int:
        return len(self.c) - 1

    @classmethod
    def constant(cls, value, order):
        c = np.zeros(order + 1)
        c[0] = value
        return cls(c)

    @classmethod
    def variable(cls, value, order):
        """The series of ``value + h``."""
        c = np.zeros(order + 1)
        c[0] = value
        if order >= 1:
            c[1] = 1.0
        return cls(c)

    def _lift(self, other):
        if isinstance(other, Jet):
            return other
        return Jet.constant(other, self.order)

    def __add__(self, other):
        return Jet(self.c + self._lift(other).c)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.c)

    def __sub__(self, other):
        return Jet(self.c - self._lift(other).c)

    def __rsub__(self, other):
        return Jet(self._lift(other).c - self.c)

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c * other)
        n = len(self.c)
        return Jet(np.convolve(self.c, other.c)[:n])

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.c / other)
        a, b = self.c, other.c
        out = np.zeros_like(a)
        for k in range(len(a)):
            out[k] = (a[k] - np.dot(out[:k], b[k:0:-1])) / b[0]
        return Jet(out)

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def sin_cos(self):
        a = self.c
        n = len(a)
        s = np.zeros(n)
        c = np.zeros(n)
        s[0], c[0] = np.sin(a[0]), np.cos(a[0])
        for k in range(1, n):
            ka = np.arange(1, k + 1) * a[1 : k + 1]
            s[k] = np.dot(ka, c[k - 1 :: -1][:k]) / k
            c[k] = -np.dot(ka, s[k - 1 :: -1][:k]) / k
        return Jet(s), Jet(c)

    def sqrt(self):
        a = self.c
        out = np.zeros_like(a)
        out[0] = np.sqrt(a[0])
        for k in range(1, len(a)):
            out[k] = (a[k] - np.dot(out[1:k], out[k - 1 : 0 : -1])) / (2.0 * out[0])
        return Jet(out)

    def integral(self, constant=0.0):
        """Antiderivative truncated to the same order."""
        out = np.zeros_like(self.c)
        out[0] = constant
        out[1:] = self.c[:-1] / np.arange(1, len(self.c))
        return Jet(out)

    def derivatives(self) -> np.ndarray:
        return self.c * np.array([factorial(k) for k in range(len(self.c))])


def compose(outer_coeffs, inner: Jet) -> Jet:
    """Series of ``f(x0 + d(h))`` given Taylor coefficients of ``f`` at ``x0``.

    ``inner`` is ``d(h)`` and must have a zero constant term.
    """
    n = inner.order
    result = Jet.constant(outer_coeffs[-1], n)
    for coef in outer_coeffs[-2::-1]:
        result = result * inner + coef
    return result
