import random

import pytest
from hypothesis import given, strategies as st

from ppls._numtheory import (MR_ROUNDS, int_to_bytes, invmod, is_probable_prime, lcm, prime_pair,
                             random_prime, random_unit)


def _trial_division(n):
    if n < 2:
        return False
    f = 2
    while f * f <= n:
        if n % f == 0:
            return False
        f += 1
    return True


def test_rounds_floor():
    assert MR_ROUNDS >= 40


def test_primality_matches_trial_division():
    for n in range(2000):
        assert is_probable_prime(n) == _trial_division(n), n


def test_carmichael_numbers_rejected():
    for n in (561, 1105, 1729, 2465, 2821, 6601, 8911):
        assert not is_probable_prime(n)


@pytest.mark.parametrize("bits", [16, 64, 256])
def test_random_prime_has_exact_size(bits):
    p = random_prime(bits, random.Random(bits))
    assert p.bit_length() == bits and is_probable_prime(p)


def test_prime_pair_distinct_and_product_size():
    p, q = prime_pair(128, random.Random(3))
    assert p != q
    assert (p * q).bit_length() == 128


@given(st.integers(1, 10**12), st.integers(1, 10**12))
def test_lcm_matches_definition(a, b):
    m = lcm(a, b)
    assert m % a == 0 and m % b == 0
    import math
    assert m * math.gcd(a, b) == a * b


@given(st.integers(1, 10**6))
def test_invmod(a):
    m = 1_000_003  # prime
    if a % m:
        assert a * invmod(a, m) % m == 1


def test_invmod_non_unit():
    with pytest.raises(ValueError):
        invmod(6, 9)


def test_random_unit_is_unit():
    r = random.Random(0)
    import math
    for _ in range(200):
        u = random_unit(143, r)
        assert 1 <= u < 143 and math.gcd(u, 143) == 1


def test_int_to_bytes():
    assert int_to_bytes(0) == b"\x00"
    assert int_to_bytes(255) == b"\xff"
    assert int_to_bytes(256) == b"\x01\x00"
