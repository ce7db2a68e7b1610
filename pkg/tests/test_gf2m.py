"""GF(2^m) arithmetic: frozen moduli, table multiplication, polynomial eval."""

import numpy as np
import pytest

from smpinfer.gf2m import (
    MODULI,
    FieldElement,
    GF2m,
    clmul,
    field,
    is_irreducible,
    mul_mod,
    poly_mod,
    smallest_irreducible,
)


def test_frozen_moduli_match_sieve():
    for m, frozen in MODULI.items():
        assert smallest_irreducible(m) == frozen


def test_known_products_gf16():
    # (x+1)^2 = x^2 + 1 in characteristic 2.
    assert mul_mod(0x3, 0x3, 0x13) == 0x5
    assert field(4).mul(0x3, 0x3) == 0x5
    # x^3 * x = x^4 = x + 1 mod x^4+x+1.
    assert mul_mod(0x8, 0x2, 0x13) == 0x3


def test_clmul_and_poly_mod():
    assert clmul(0b101, 0b11) == 0b1111
    assert poly_mod(0b10000, 0x13) == 0b0011
    assert poly_mod(0b1, 0x13) == 0b1


def test_is_irreducible_rejects_composites():
    assert not is_irreducible(0b101)  # x^2+1 = (x+1)^2
    assert not is_irreducible(0b110)  # x^2+x = x(x+1)
    assert not is_irreducible(0x105)  # x^8+x^2+1 = (x^4+x+1)^2
    assert not is_irreducible(0x103)  # x^8+x+1 has the factor x^2+x+1
    assert is_irreducible(0x11B)


def test_sieve_validates_input():
    with pytest.raises(ValueError):
        smallest_irreducible(0)


@pytest.mark.parametrize("m", [2, 4, 8, 11])
def test_field_axioms_spot_checks(m):
    gf = field(m)
    rng = np.random.default_rng(m)
    size = 1 << m
    a, b, c = rng.integers(0, size, size=(3, 200))
    ab = gf.mul(a, b)
    np.testing.assert_array_equal(gf.mul(ab, c), gf.mul(a, gf.mul(b, c)))
    np.testing.assert_array_equal(gf.mul(a, b ^ c), gf.mul(a, b) ^ gf.mul(a, c))
    np.testing.assert_array_equal(gf.mul(a, np.ones_like(a)), a)
    nz = a[a != 0]
    inverses = np.array([gf._pow(int(x), gf.order - 1) for x in nz[:32]])
    np.testing.assert_array_equal(gf.mul(nz[:32], inverses), np.ones(min(32, nz.size), dtype=np.int64))


@pytest.mark.parametrize("m", [3, 4])
def test_vectorized_mul_matches_scalar_everywhere(m):
    gf = field(m)
    size = 1 << m
    vals = np.arange(size)
    table = gf.mul(vals[:, None], vals[None, :])
    for a in range(size):
        for b in range(size):
            assert table[a, b] == mul_mod(a, b, gf.modulus)


def test_generator_has_full_order():
    # The degree-8 modulus 0x11B is irreducible but not primitive (x has
    # multiplicative order 51), so the generator search matters.
    gf = field(8)
    powers = gf._exp[: gf.order]
    assert len(set(int(v) for v in powers)) == gf.order
    assert gf._pow(2, 51) == 1  # x really is a non-generator here
    assert gf.generator != 2


def test_poly_eval_matches_naive():
    gf = field(5)
    rng = np.random.default_rng(7)
    for _ in range(20):
        coeffs = [int(v) for v in rng.integers(0, 32, size=4)]
        points = rng.integers(0, 32, size=11)
        got = gf.poly_eval(coeffs, points)
        want = []
        for x in points:
            acc = 0
            for j, cf in enumerate(coeffs):
                acc ^= mul_mod(cf, gf._pow(int(x), j), gf.modulus)
            want.append(acc)
        np.testing.assert_array_equal(got, want)


def test_field_cache_and_validation():
    assert field(4) is field(4)
    with pytest.raises(ValueError):
        GF2m(4, modulus=0x11)  # x^4+1 is reducible
    with pytest.raises(ValueError):
        GF2m(0)


def test_field_element_wrapper():
    a = FieldElement(0x3, 4)
    assert (a * a).value == 0x5
    assert (a + a).value == 0
    assert (a - a).value == 0
    assert (a ** 2).value == 0x5
    assert (a * 0x8).value == mul_mod(0x3, 0x8, 0x13)
    with pytest.raises(ValueError):
        a * FieldElement(1, 5)
