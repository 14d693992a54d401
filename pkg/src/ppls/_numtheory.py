"""Prime generation and modular helpers on top of gmpy2."""
from __future__ import annotations

import math
import random

import gmpy2
from gmpy2 import mpz

MR_ROUNDS = 40


def is_probable_prime(n: int) -> bool:
    return n >= 2 and bool(gmpy2.is_prime(mpz(n), MR_ROUNDS))


def random_prime(bits: int, rng: random.Random) -> int:
    """Random prime of exactly ``bits`` bits with the top two bits set.

    Setting both top bits makes the product of two such primes exactly
    ``2 * bits`` long.
    """
    if bits < 3:
        raise ValueError("prime size must be at least 3 bits")
    top = (1 << (bits - 1)) | (1 << (bits - 2))
    while True:
        candidate = rng.getrandbits(bits) | top | 1
        if is_probable_prime(candidate):
            return candidate


def prime_pair(bits: int, rng: random.Random) -> tuple[int, int]:
    """Two distinct primes whose product has exactly ``bits`` bits."""
    half = bits // 2
    p = random_prime(bits - half, rng)
    while True:
        q = random_prime(half, rng)
        if q != p:
            return p, q


def lcm(a: int, b: int) -> int:
    return a // math.gcd(a, b) * b


def invmod(a: int, m: int) -> int:
    return pow(a, -1, m)


def random_unit(n: int, rng: random.Random) -> int:
    """Uniform element of [1, n) coprime to n."""
    while True:
        r = rng.randrange(1, n)
        if math.gcd(r, n) == 1:
            return r


def int_to_bytes(value: int) -> bytes:
    """Minimal big-endian magnitude; zero encodes as a single zero byte."""
    if value < 0:
        raise ValueError("negative integers have no magnitude encoding")
    return value.to_bytes(max(1, (value.bit_length() + 7) // 8), "big")
