"""Paillier cryptosystem with additive and scalar homomorphisms.

Ciphertexts compose under multiplication mod n^2: multiplying two ciphertexts
adds their plaintexts, raising one to a constant multiplies its plaintext.
Negative plaintexts use the half-range convention, v < 0 is stored as n + v.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import gmpy2
from gmpy2 import mpz

from ._numtheory import invmod, is_probable_prime, lcm, prime_pair, random_unit
from .errors import MalformedCiphertext, PlaintextOutOfRange

DEFAULT_BITS = 1024

_SYSTEM_RNG = random.SystemRandom()


@dataclass(frozen=True)
class PaillierPublicKey:
    n: int
    g: int
    n_squared: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "n_squared", self.n * self.n)

    @property
    def uses_simple_generator(self) -> bool:
        return self.g == self.n + 1


@dataclass(frozen=True)
class PaillierPrivateKey:
    public_key: PaillierPublicKey
    p: int
    q: int
    lam: int
    mu: int  # L(g^lam mod n^2)^-1 mod n


@dataclass(frozen=True)
class PaillierCiphertext:
    value: int


def _L(x: int, n: int) -> int:
    return (x - 1) // n


def keypair_from_primes(p: int, q: int, g: int | None = None) -> tuple[PaillierPublicKey, PaillierPrivateKey]:
    """Build a keypair from caller-chosen primes.

    Meant for small worked examples (p=11, q=13) and conformance tests;
    ``keygen`` is the normal entry point.
    """
    if p == q:
        raise ValueError("p and q must differ")
    if not (is_probable_prime(p) and is_probable_prime(q)):
        raise ValueError("p and q must be prime")
    n = p * q
    n2 = n * n
    lam = lcm(p - 1, q - 1)
    if g is None:
        g = n + 1
    if math.gcd(g, n2) != 1:
        raise ValueError("g is not a unit mod n^2")
    u = _L(pow(g, lam, n2), n)
    if math.gcd(u, n) != 1:
        raise ValueError("g does not satisfy gcd(L(g^lambda mod n^2), n) = 1")
    pk = PaillierPublicKey(n=n, g=g)
    return pk, PaillierPrivateKey(public_key=pk, p=p, q=q, lam=lam, mu=invmod(u, n))


def keygen(bits: int = DEFAULT_BITS, rng: random.Random | None = None,
           random_generator: bool = False) -> tuple[PaillierPublicKey, PaillierPrivateKey]:
    """Generate a keypair whose modulus has ``bits`` bits.

    By default g = n + 1. With ``random_generator`` a random unit of
    Z_{n^2} is drawn until the decryption denominator is invertible.
    """
    if bits < 64:
        raise ValueError("Paillier keys below 64 bits are not supported")
    rng = rng or _SYSTEM_RNG
    while True:
        p, q = prime_pair(bits, rng)
        if math.gcd(p * q, (p - 1) * (q - 1)) == 1:
            break
    if not random_generator:
        return keypair_from_primes(p, q)
    n2 = (p * q) ** 2
    while True:
        g = random_unit(n2, rng)
        try:
            return keypair_from_primes(p, q, g)
        except ValueError:
            continue


def _check_plaintext(pk: PaillierPublicKey, m: int) -> None:
    if not 0 <= m < pk.n:
        raise PlaintextOutOfRange(f"plaintext must lie in [0, n), got {m}")


def _g_pow(pk: PaillierPublicKey, m: int):
    if pk.uses_simple_generator:
        # (n+1)^m = 1 + m*n mod n^2
        return (1 + mpz(m) * pk.n) % pk.n_squared
    return gmpy2.powmod(pk.g, m, pk.n_squared)


def encrypt(pk: PaillierPublicKey, m: int, rng: random.Random | None = None) -> PaillierCiphertext:
    _check_plaintext(pk, m)
    r = random_unit(pk.n, rng or _SYSTEM_RNG)
    c = _g_pow(pk, m) * gmpy2.powmod(r, pk.n, pk.n_squared) % pk.n_squared
    return PaillierCiphertext(int(c))


def encrypt_deterministic(pk: PaillierPublicKey, m: int) -> PaillierCiphertext:
    """Encryption with randomness fixed to 1, i.e. g^m mod n^2."""
    _check_plaintext(pk, m)
    return PaillierCiphertext(int(_g_pow(pk, m)))


def encrypt_zero_mask(pk: PaillierPublicKey, rng: random.Random | None = None) -> int:
    """r^n mod n^2 for a fresh unit r: an encryption of zero, as a raw value."""
    r = random_unit(pk.n, rng or _SYSTEM_RNG)
    return int(gmpy2.powmod(r, pk.n, pk.n_squared))


def decrypt(sk: PaillierPrivateKey, c: PaillierCiphertext) -> int:
    pk = sk.public_key
    if not 0 < c.value < pk.n_squared or math.gcd(c.value, pk.n_squared) != 1:
        raise MalformedCiphertext("ciphertext is not a unit mod n^2")
    u = _L(int(gmpy2.powmod(c.value, sk.lam, pk.n_squared)), pk.n)
    return u * sk.mu % pk.n


def hom_add(pk: PaillierPublicKey, c1: PaillierCiphertext, c2: PaillierCiphertext) -> PaillierCiphertext:
    return PaillierCiphertext(int(mpz(c1.value) * c2.value % pk.n_squared))


def hom_scale(pk: PaillierPublicKey, c: PaillierCiphertext, k: int) -> PaillierCiphertext:
    if k < 0:
        raise ValueError("scalar must be non-negative")
    return PaillierCiphertext(int(gmpy2.powmod(c.value, k, pk.n_squared)))


def encode_signed(pk: PaillierPublicKey, v: int) -> int:
    # |v| < n/2, written without division so odd n is handled exactly
    if not 2 * abs(v) < pk.n:
        raise PlaintextOutOfRange(f"|{v}| is not below n/2")
    return v if v >= 0 else pk.n + v


def decode_signed(pk: PaillierPublicKey, m: int) -> int:
    return m if 2 * m < pk.n else m - pk.n
