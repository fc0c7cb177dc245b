"""Exact scalar arithmetic.

All geometry and all verified bounds in this package use arbitrary-precision
rationals; `fractions.Fraction` already provides the canonical reduced form
(gcd 1, positive denominator) and closed exact arithmetic, so it is the scalar
type throughout.  Floats appear only in Monte Carlo summary statistics.

Serialization is the string "p/q" in lowest terms ("p" alone for integers is
accepted on input, always written with the explicit denominator on output).
"""

from __future__ import annotations

from fractions import Fraction

Scalar = Fraction

ZERO = Fraction(0)
ONE = Fraction(1)


def scalar(value) -> Fraction:
    """Coerce ints, "p/q" strings, or Fractions to an exact scalar."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"not an exact scalar: {value!r}")


def format_scalar(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def parse_scalar(text: str) -> Fraction:
    return Fraction(text.strip())


def pow2_at_most(x: Fraction) -> Fraction:
    """Largest power of two that is <= x (x > 0).  Deterministic rounding
    helper used when picking sizes under an exact budget."""
    if x <= 0:
        raise ValueError("pow2_at_most needs a positive argument")
    n, d = x.numerator, x.denominator
    # 2**e <= n/d < 2**(e+1)
    e = n.bit_length() - d.bit_length()
    p = Fraction(2) ** e
    if p > x:
        p /= 2
    if 2 * p <= x:
        p *= 2
    return p


def ceil_log2_inverse(x: Fraction) -> int:
    """Smallest integer k with 2**-k <= x, for x in (0, 1]."""
    if not 0 < x <= 1:
        raise ValueError("argument must be in (0, 1]")
    k = 0
    p = Fraction(1)
    while p > x:
        p /= 2
        k += 1
    return k
