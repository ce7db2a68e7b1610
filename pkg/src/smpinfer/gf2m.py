"""Binary extension fields GF(2^m) for 4-wise independent hashing.

Elements are m-bit integers; addition is XOR and multiplication is a
carry-less product reduced by a fixed irreducible modulus.  Vectorized
multiplication goes through discrete log/exp tables built from a generator
of the multiplicative group, so evaluating many degree-3 polynomials stays
cheap.  The moduli below are the numerically smallest irreducible
polynomials of each degree, frozen as literals and re-derived by the sieve
in tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# m -> smallest irreducible polynomial of degree m over GF(2), as a bitmask
# (bit i = coefficient of x^i).  0x13 is x^4 + x + 1.
MODULI = {
    1: 0x2,
    2: 0x7,
    3: 0xB,
    4: 0x13,
    5: 0x25,
    6: 0x43,
    7: 0x83,
    8: 0x11B,
    9: 0x203,
    10: 0x409,
    11: 0x805,
    12: 0x1009,
    13: 0x201B,
    14: 0x4021,
    15: 0x8003,
    16: 0x1002B,
}

_TABLE_LIMIT = 20  # largest m whose log/exp tables we materialize (8 MiB)


def clmul(a: int, b: int) -> int:
    """Carry-less (GF(2)[x]) product of two polynomial bitmasks."""
    out = 0
    while b:
        if b & 1:
            out ^= a
        a <<= 1
        b >>= 1
    return out


def poly_mod(a: int, f: int) -> int:
    """Remainder of the polynomial a modulo f over GF(2)."""
    df = f.bit_length() - 1
    while a.bit_length() - 1 >= df:
        a ^= f << (a.bit_length() - 1 - df)
    return a


def mul_mod(a: int, b: int, f: int) -> int:
    return poly_mod(clmul(a, b), f)


def _pow2_pow(a: int, e: int, f: int) -> int:
    """a^(2^e) mod f by repeated squaring."""
    for _ in range(e):
        a = mul_mod(a, a, f)
    return a


def _poly_gcd(a: int, b: int) -> int:
    while b:
        da, db = a.bit_length(), b.bit_length()
        if da < db:
            a, b = b, a
            continue
        a ^= b << (da - db)
    return a


def _prime_factors(n: int) -> list[int]:
    out = []
    d = 2
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            while n % d == 0:
                n //= d
        d += 1
    if n > 1:
        out.append(n)
    return out


def is_irreducible(f: int) -> bool:
    """Rabin's test: x^(2^m) = x mod f, and x^(2^(m/q)) - x coprime to f."""
    m = f.bit_length() - 1
    if m < 1:
        return False
    x = 0b10
    if m == 1:
        return True
    if _pow2_pow(x, m, f) != x:
        return False
    for q in _prime_factors(m):
        h = _pow2_pow(x, m // q, f) ^ x
        if _poly_gcd(f, h) != 1:
            return False
    return True


def smallest_irreducible(m: int) -> int:
    """Numerically smallest degree-m irreducible polynomial over GF(2)."""
    if m < 1:
        raise ValueError("degree must be >= 1")
    for f in range(1 << m, 1 << (m + 1)):
        if is_irreducible(f):
            return f
    raise AssertionError("no irreducible polynomial found (impossible)")


class GF2m:
    """Arithmetic in GF(2^m) with vectorized multiplication.

    The log/exp tables index the cyclic multiplicative group by a searched
    generator; the default modulus comes from the frozen MODULI table (or the
    sieve, above its range).
    """

    def __init__(self, m: int, modulus: int | None = None):
        if m < 1:
            raise ValueError("m must be >= 1")
        if m > _TABLE_LIMIT:
            raise ValueError(f"log/exp tables capped at m = {_TABLE_LIMIT}")
        self.m = m
        self.modulus = MODULI.get(m, None) if modulus is None else modulus
        if self.modulus is None:
            self.modulus = smallest_irreducible(m)
        if self.modulus.bit_length() - 1 != m or not is_irreducible(self.modulus):
            raise ValueError(f"modulus {self.modulus:#x} is not irreducible of degree {m}")
        self.order = (1 << m) - 1
        self._build_tables()

    def _build_tables(self):
        g = self._find_generator()
        exp = np.empty(2 * max(self.order, 1), dtype=np.int64)
        log = np.zeros(1 << self.m, dtype=np.int64)
        acc = 1
        for i in range(self.order):
            exp[i] = acc
            log[acc] = i
            acc = mul_mod(acc, g, self.modulus)
        exp[self.order : 2 * self.order] = exp[: self.order]  # wraps mod order
        self.generator = g
        self._exp = exp
        self._log = log

    def _find_generator(self) -> int:
        if self.order <= 1:
            return 1
        factors = _prime_factors(self.order)
        for g in range(2, 1 << self.m):
            if all(self._pow(g, self.order // q) != 1 for q in factors):
                return g
        raise AssertionError("no generator found (impossible for a field)")

    def _pow(self, a: int, e: int) -> int:
        out = 1
        while e:
            if e & 1:
                out = mul_mod(out, a, self.modulus)
            a = mul_mod(a, a, self.modulus)
            e >>= 1
        return out

    def mul(self, a, b):
        """Elementwise product; scalars or int arrays, zeros handled."""
        av, bv = np.broadcast_arrays(
            np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64)
        )
        scalar = av.ndim == 0
        av, bv = np.atleast_1d(av), np.atleast_1d(bv)
        out = np.zeros(av.shape, dtype=np.int64)
        nz = (av != 0) & (bv != 0)
        out[nz] = self._exp[self._log[av[nz]] + self._log[bv[nz]]]
        return int(out[0]) if scalar else out

    def poly_eval(self, coeffs, points) -> np.ndarray:
        """Evaluate sum_j coeffs[j] x^j at many points (Horner, vectorized)."""
        xs = np.asarray(points, dtype=np.int64)
        out = np.full(xs.shape, int(coeffs[-1]), dtype=np.int64)
        for c in reversed(coeffs[:-1]):
            out = self.mul(out, xs) ^ int(c)
        return out


@lru_cache(maxsize=32)
def field(m: int) -> GF2m:
    """Cached field instances for the default moduli."""
    return GF2m(m)


@dataclass(frozen=True)
class FieldElement:
    """One element of GF(2^m), for readable scalar arithmetic in tests."""

    value: int
    m: int

    def _peer(self, other) -> int:
        if isinstance(other, FieldElement):
            if other.m != self.m:
                raise ValueError("elements of different fields")
            return other.value
        return int(other)

    def __add__(self, other):
        return FieldElement(self.value ^ self._peer(other), self.m)

    __sub__ = __add__  # characteristic 2

    def __mul__(self, other):
        return FieldElement(
            mul_mod(self.value, self._peer(other), field(self.m).modulus), self.m
        )

    def __pow__(self, e: int):
        return FieldElement(field(self.m)._pow(self.value, e), self.m)
