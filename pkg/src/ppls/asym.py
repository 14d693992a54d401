"""RSA keys, a hybrid RSA/AES-GCM envelope, PKCS#1 v1.5 signatures and
pseudo-identity derivation.

RSA is written out here so key generation can be driven from a seeded
``random.Random`` (scenario runs must be reproducible). The private exponent
is computed modulo (p-1)(q-1). AES-GCM and AES-CMAC come from ``cryptography``.
"""
from __future__ import annotations

import hashlib
import hmac
import math
import random
import struct
from dataclasses import dataclass

import gmpy2
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers import algorithms
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.cmac import CMAC

from ._numtheory import int_to_bytes, invmod, is_probable_prime, prime_pair
from .errors import DecryptionFailure, EmptyIdentity

DEFAULT_BITS = 1024
DEFAULT_EXPONENT = 65537
SYMMETRIC_KEY_BYTES = 32
NONCE_BYTES = 12
PID_BYTES = 16
MAX_ID_BYTES = 1024

# DER prefix of DigestInfo for SHA-256 (RFC 8017, section 9.2 note 1)
_SHA256_PREFIX = bytes.fromhex("3031300d060960864801650304020105000420")

_SYSTEM_RNG = random.SystemRandom()


@dataclass(frozen=True)
class AsymPublicKey:
    n: int
    e: int

    @property
    def size_bytes(self) -> int:
        return (self.n.bit_length() + 7) // 8

    def to_bytes(self) -> bytes:
        n, e = int_to_bytes(self.n), int_to_bytes(self.e)
        return struct.pack(">I", len(n)) + n + struct.pack(">I", len(e)) + e

    @classmethod
    def from_bytes(cls, data: bytes) -> "AsymPublicKey":
        try:
            (ln,) = struct.unpack_from(">I", data, 0)
            n = int.from_bytes(data[4:4 + ln], "big")
            (le,) = struct.unpack_from(">I", data, 4 + ln)
            e_bytes = data[8 + ln:8 + ln + le]
        except struct.error as exc:
            raise DecryptionFailure("truncated public key") from exc
        if len(e_bytes) != le or 8 + ln + le != len(data):
            raise DecryptionFailure("malformed public key")
        return cls(n=n, e=int.from_bytes(e_bytes, "big"))


@dataclass(frozen=True)
class AsymKeypair:
    n: int
    e: int
    d: int
    p: int
    q: int

    @property
    def public(self) -> AsymPublicKey:
        return AsymPublicKey(self.n, self.e)


@dataclass(frozen=True)
class HybridCiphertext:
    wrapped_key: bytes
    nonce: bytes
    body: bytes

    def to_bytes(self) -> bytes:
        return (struct.pack(">I", len(self.wrapped_key)) + self.wrapped_key + self.nonce
                + struct.pack(">I", len(self.body)) + self.body)


@dataclass(frozen=True)
class Signature:
    value: int


@dataclass(frozen=True)
class PseudoIdentity:
    value: bytes

    def __post_init__(self):
        if len(self.value) != PID_BYTES:
            raise ValueError(f"pseudo-identity must be {PID_BYTES} bytes")

    def hex(self) -> str:
        return self.value.hex()

    @classmethod
    def fromhex(cls, text: str) -> "PseudoIdentity":
        return cls(bytes.fromhex(text))

    def __repr__(self):
        return f"PseudoIdentity({self.value.hex()})"


def keypair_from_primes(p: int, q: int, e: int = DEFAULT_EXPONENT) -> AsymKeypair:
    if p == q or not (is_probable_prime(p) and is_probable_prime(q)):
        raise ValueError("p and q must be distinct primes")
    phi = (p - 1) * (q - 1)
    if not 1 < e < phi or math.gcd(e, phi) != 1:
        raise ValueError("e must be a unit mod (p-1)(q-1)")
    return AsymKeypair(n=p * q, e=e, d=invmod(e, phi), p=p, q=q)


def asym_keygen(bits: int = DEFAULT_BITS, rng: random.Random | None = None,
                e: int = DEFAULT_EXPONENT) -> AsymKeypair:
    if bits < 512:
        raise ValueError("RSA keys below 512 bits are not supported")
    rng = rng or _SYSTEM_RNG
    while True:
        p, q = prime_pair(bits, rng)
        if math.gcd(e, (p - 1) * (q - 1)) == 1:
            return keypair_from_primes(p, q, e)


def rsa_encrypt_int(pk: AsymPublicKey, m: int) -> int:
    """Textbook c = m^e mod n, no padding."""
    if not 0 <= m < pk.n:
        raise ValueError("message representative out of range")
    return int(gmpy2.powmod(m, pk.e, pk.n))


def rsa_decrypt_int(sk: AsymKeypair, c: int) -> int:
    if not 0 <= c < sk.n:
        raise DecryptionFailure("ciphertext representative out of range")
    return int(gmpy2.powmod(c, sk.d, sk.n))


def _pad_v15(message: bytes, k: int, rng: random.Random) -> bytes:
    # EME-PKCS1-v1_5: 00 02 PS 00 M, PS at least 8 nonzero bytes
    ps_len = k - len(message) - 3
    if ps_len < 8:
        raise ValueError("message too long for modulus")
    ps = bytes(rng.randrange(1, 256) for _ in range(ps_len))
    return b"\x00\x02" + ps + b"\x00" + message


def _unpad_v15(block: bytes) -> bytes:
    sep = block.find(b"\x00", 2)
    if block[:2] != b"\x00\x02" or sep < 10:
        raise DecryptionFailure("bad key-wrap padding")
    return block[sep + 1:]


def asym_encrypt(pk: AsymPublicKey, payload: bytes, rng: random.Random | None = None) -> HybridCiphertext:
    rng = rng or _SYSTEM_RNG
    key = rng.randbytes(SYMMETRIC_KEY_BYTES)
    nonce = rng.randbytes(NONCE_BYTES)
    k = pk.size_bytes
    block = _pad_v15(key, k, rng)
    wrapped = rsa_encrypt_int(pk, int.from_bytes(block, "big")).to_bytes(k, "big")
    body = AESGCM(key).encrypt(nonce, payload, None)
    return HybridCiphertext(wrapped_key=wrapped, nonce=nonce, body=body)


def asym_decrypt(sk: AsymKeypair, ct: HybridCiphertext) -> bytes:
    k = sk.public.size_bytes
    if len(ct.wrapped_key) != k or len(ct.nonce) != NONCE_BYTES:
        raise DecryptionFailure("envelope does not match this key")
    block = rsa_decrypt_int(sk, int.from_bytes(ct.wrapped_key, "big")).to_bytes(k, "big")
    key = _unpad_v15(block)
    if len(key) != SYMMETRIC_KEY_BYTES:
        raise DecryptionFailure("unwrapped key has the wrong length")
    try:
        return AESGCM(key).decrypt(ct.nonce, ct.body, None)
    except InvalidTag as exc:
        raise DecryptionFailure("authentication tag mismatch") from exc


def _emsa_v15(message: bytes, k: int) -> int:
    t = _SHA256_PREFIX + hashlib.sha256(message).digest()
    if k < len(t) + 11:
        raise ValueError("modulus too short for a SHA-256 signature")
    return int.from_bytes(b"\x00\x01" + b"\xff" * (k - len(t) - 3) + b"\x00" + t, "big")


def sign(sk: AsymKeypair, message: bytes) -> Signature:
    em = _emsa_v15(message, sk.public.size_bytes)
    return Signature(int(gmpy2.powmod(em, sk.d, sk.n)))


def verify(pk: AsymPublicKey, message: bytes, sig: Signature) -> bool:
    if not isinstance(sig.value, int) or not 0 <= sig.value < pk.n:
        return False
    try:
        expected = _emsa_v15(message, pk.size_bytes)
    except ValueError:
        return False
    recovered = int(gmpy2.powmod(sig.value, pk.e, pk.n))
    k = pk.size_bytes
    return hmac.compare_digest(recovered.to_bytes(k, "big"), expected.to_bytes(k, "big"))


def pid_derive(identity: str, epoch_key: bytes) -> PseudoIdentity:
    """AES-CMAC of the identity under the epoch key."""
    raw = identity.encode("utf-8")
    if not raw:
        raise EmptyIdentity("identity must be non-empty")
    if len(raw) > MAX_ID_BYTES:
        raise ValueError(f"identity longer than {MAX_ID_BYTES} bytes")
    mac = CMAC(algorithms.AES(epoch_key))
    mac.update(raw)
    return PseudoIdentity(mac.finalize())
