"""Blinded comparison of a threshold distance against an actual distance.

The threshold holder encrypts ``d_threshold * g`` under a throwaway Paillier
key. The distance holder answers with a batch: item ``i`` (1 <= i <= i_max)
encrypts ``s * (d_threshold - d_actual - i) * g`` for a secret unit ``s``.
The threshold holder decrypts and reports TRUE iff some item is zero, which
happens exactly when ``1 <= d_threshold - d_actual <= i_max``.
"""
from __future__ import annotations

import math
import random
from dataclasses import dataclass

import gmpy2
from gmpy2 import mpz

from ._numtheory import random_unit
from .errors import ThresholdOutOfRange
from .paillier import (
    PaillierCiphertext,
    PaillierPrivateKey,
    PaillierPublicKey,
    decrypt,
    encrypt,
    encrypt_deterministic,
    encrypt_zero_mask,
)

DEFAULT_I_MAX = 1000

_SYSTEM_RNG = random.SystemRandom()


@dataclass(frozen=True)
class ComparisonParams:
    """``g`` is the plaintext multiplier and ``i_max`` bounds the traversal.

    ``mask_bits`` sizes the per-item re-randomisation exponent: each item is
    multiplied by ``h ** a_i`` where ``h = r'^n`` is the batch's encryption
    of zero and ``a_i`` is a fresh ``mask_bits``-bit integer.
    """

    g: int = 1
    i_max: int = DEFAULT_I_MAX
    mask_bits: int = 64

    def __post_init__(self):
        if self.g < 1:
            raise ValueError("g must be positive")
        if self.i_max < 1:
            raise ValueError("i_max must be positive")
        if self.mask_bits < 1:
            raise ValueError("mask_bits must be positive")

    def check_key(self, pk: PaillierPublicKey) -> None:
        if not self.g < pk.n or math.gcd(self.g, pk.n) != 1:
            raise ValueError("g must be a unit below n")


@dataclass(frozen=True)
class ThresholdCiphertext:
    ct: PaillierCiphertext


@dataclass(frozen=True)
class ComparisonBatch:
    items: tuple[PaillierCiphertext, ...]


def make_threshold_ct(pk_m: PaillierPublicKey, d_threshold: int, params: ComparisonParams,
                      rng: random.Random | None = None) -> ThresholdCiphertext:
    if not 1 <= d_threshold <= params.i_max:
        raise ThresholdOutOfRange(f"threshold {d_threshold} outside [1, {params.i_max}]")
    params.check_key(pk_m)
    return ThresholdCiphertext(encrypt(pk_m, d_threshold * params.g % pk_m.n, rng))


def respond(pk_m: PaillierPublicKey, c: ThresholdCiphertext, d_actual: int, params: ComparisonParams,
            rng: random.Random | None = None) -> ComparisonBatch:
    if d_actual < 0:
        raise ValueError("distance must be non-negative")
    params.check_key(pk_m)
    rng = rng or _SYSTEM_RNG
    n, n2 = pk_m.n, pk_m.n_squared
    s = random_unit(n, rng)
    h = mpz(encrypt_zero_mask(pk_m, rng))

    # (c * E0(-(d+1)g))^s, then each later item differs by E0(-g)^s = E0(-g*s)
    first = mpz(c.ct.value) * encrypt_deterministic(pk_m, -(d_actual + 1) * params.g % n).value % n2
    current = gmpy2.powmod(first, s, n2)
    step = mpz(encrypt_deterministic(pk_m, -params.g * s % n).value)

    items = []
    for _ in range(params.i_max):
        mask = gmpy2.powmod(h, rng.getrandbits(params.mask_bits) | 1, n2)
        items.append(PaillierCiphertext(int(current * mask % n2)))
        current = current * step % n2
    return ComparisonBatch(tuple(items))


def zero_index(sk_m: PaillierPrivateKey, batch: ComparisonBatch) -> int | None:
    """1-based index of the first item decrypting to zero, else None.

    When present this equals d_threshold - d_actual.
    """
    for i, item in enumerate(batch.items, start=1):
        if decrypt(sk_m, item) == 0:
            return i
    return None


def judge(sk_m: PaillierPrivateKey, batch: ComparisonBatch) -> bool:
    return zero_index(sk_m, batch) is not None


def oracle_compare(d_threshold: int, d_actual: int) -> bool:
    return d_threshold > d_actual
