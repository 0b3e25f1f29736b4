"""Paillier additive homomorphic encryption and a fixed-point codec for reals.

Big-integer arithmetic goes through gmpy2. The generator is fixed at
``g = n + 1`` so ``g^m mod n^2`` reduces to ``1 + m*n``.

Ciphertexts carry an ``exponent``: the power of the codec scale the hidden
plaintext is encoded at. Encrypted residues sit at exponent 1; multiplying by
an encoded real feature lifts them to exponent 2. Only one multiplication
depth is ever needed.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import gmpy2
import numpy as np

from .errors import ConfigError, DomainError, EncodingOverflowError, ParseError
from .numeric import RngStream

SUPPORTED_KEY_BITS = (512, 1024, 2048)
MILLER_RABIN_ROUNDS = 40
DEFAULT_SCALE = 10**6

KEY_MAGIC = b"VFLK"
KEY_VERSION = 1


@dataclass(frozen=True)
class PublicKey:
    n: int

    @property
    def n_squared(self) -> int:
        return self.n * self.n

    @property
    def g(self) -> int:
        return self.n + 1


@dataclass(frozen=True)
class PrivateKey:
    public_key: PublicKey
    p: int
    q: int
    lambda_val: int
    mu: int


@dataclass(frozen=True)
class Ciphertext:
    value: int
    exponent: int = 1


def _L(x: int, n: int) -> int:
    return (x - 1) // n


def keypair_from_primes(p: int, q: int) -> tuple[PublicKey, PrivateKey]:
    """Build a keypair from explicit primes. Also used with toy primes in tests."""
    if p == q:
        raise ConfigError("p and q must be distinct")
    n = p * q
    if math.gcd(n, (p - 1) * (q - 1)) != 1:
        raise ConfigError("gcd(pq, (p-1)(q-1)) must be 1")
    pk = PublicKey(n)
    lam = math.lcm(p - 1, q - 1)
    n2 = n * n
    mu = int(gmpy2.invert(_L(int(gmpy2.powmod(pk.g, lam, n2)), n), n))
    return pk, PrivateKey(pk, p, q, lam, mu)


def _random_prime(bits: int, rng: RngStream) -> int:
    # top two bits set so p*q has exactly 2*bits bits
    while True:
        cand = rng.randbits(bits) | (3 << (bits - 2)) | 1
        if gmpy2.is_prime(cand, MILLER_RABIN_ROUNDS):
            return cand


def keygen(bits: int, rng: RngStream) -> tuple[PublicKey, PrivateKey]:
    """Generate a keypair with an exactly ``bits``-bit modulus."""
    if bits not in SUPPORTED_KEY_BITS:
        raise ConfigError(f"unsupported key length {bits}; choose one of {SUPPORTED_KEY_BITS}")
    while True:
        p = _random_prime(bits // 2, rng)
        q = _random_prime(bits // 2, rng)
        if p != q:
            break
    return keypair_from_primes(p, q)


def _random_unit(n: int, rng: RngStream) -> int:
    while True:
        r = rng.randbelow(n)
        if r > 0 and math.gcd(r, n) == 1:
            return r


def encrypt(pk: PublicKey, m: int, rng: RngStream, exponent: int = 1) -> Ciphertext:
    if not 0 <= m < pk.n:
        raise DomainError("plaintext must lie in [0, n)")
    n2 = pk.n_squared
    r = _random_unit(pk.n, rng)
    c = ((1 + m * pk.n) % n2) * int(gmpy2.powmod(r, pk.n, n2)) % n2
    return Ciphertext(c, exponent)


def decrypt(sk: PrivateKey, c: Ciphertext) -> int:
    n = sk.public_key.n
    x = int(gmpy2.powmod(c.value, sk.lambda_val, sk.public_key.n_squared))
    return _L(x, n) * sk.mu % n


def add_cipher(pk: PublicKey, c1: Ciphertext, c2: Ciphertext) -> Ciphertext:
    if c1.exponent != c2.exponent:
        raise DomainError(f"cannot add ciphertexts at scale exponents {c1.exponent} and {c2.exponent}")
    return Ciphertext(c1.value * c2.value % pk.n_squared, c1.exponent)


def scalar_mult(pk: PublicKey, k: int, c: Ciphertext, exponent_increase: int = 0) -> Ciphertext:
    """Homomorphic ``k * m``. Negative ``k`` acts as ``n + k`` in the plaintext ring.

    A negative scalar is applied as ``(c^-1)^|k|``, which decrypts to the same
    ring element as ``c^(n+k)`` with a far shorter exponent.
    """
    n2 = pk.n_squared
    if k >= 0:
        value = int(gmpy2.powmod(c.value, k, n2))
    else:
        value = int(gmpy2.powmod(gmpy2.invert(c.value, n2), -k, n2))
    return Ciphertext(value, c.exponent + exponent_increase)


class FixedPointCodec:
    """Maps reals into ``Z_n``: ``round(x * scale) mod n``; upper half is negative."""

    def __init__(self, modulus: int, scale: int = DEFAULT_SCALE):
        if scale < 1:
            raise ConfigError("scale must be a positive integer")
        self.modulus = modulus
        self.scale = scale

    def __repr__(self):
        return f"FixedPointCodec(scale={self.scale}, modulus_bits={self.modulus.bit_length()})"

    def to_int(self, x: float, exponent: int = 1) -> int:
        """Signed integer ``round(x * scale**exponent)`` with range checking."""
        s = self.scale ** exponent
        if not math.isfinite(x) or abs(x) >= self.modulus / (2 * s):
            raise EncodingOverflowError(f"{x!r} does not fit the plaintext ring at scale {s}")
        return round(x * s)

    def encode(self, x: float, exponent: int = 1) -> int:
        return self.to_int(x, exponent) % self.modulus

    def signed(self, m: int) -> int:
        """Ring element to signed integer in ``(-n/2, n/2]``."""
        m %= self.modulus
        return m - self.modulus if m > self.modulus // 2 else m

    def decode(self, m: int, exponent: int = 1) -> float:
        return self.signed(m) / self.scale ** exponent


def encrypt_vector(pk: PublicKey, codec: FixedPointCodec, xs: Sequence[float],
                   rng: RngStream) -> list[Ciphertext]:
    """Encode and encrypt each entry in order."""
    return [encrypt(pk, codec.encode(float(x)), rng) for x in xs]


def decrypt_vector(sk: PrivateKey, codec: FixedPointCodec, cs: Sequence[Ciphertext]) -> np.ndarray:
    return np.array([codec.decode(decrypt(sk, c), c.exponent) for c in cs])


def encrypted_transpose_matvec(pk: PublicKey, codec: FixedPointCodec, X: np.ndarray,
                               enc_r: Sequence[Ciphertext], coef: float = 1.0) -> list[Ciphertext]:
    """Encrypted ``coef * X.T @ r`` from plaintext ``X`` (rows x cols) and ``Enc(r)``.

    Each entry of ``coef * X`` is encoded at the codec scale, so the results sit
    one scale exponent above ``enc_r``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != len(enc_r):
        raise DomainError(f"X has {X.shape[0]} rows but {len(enc_r)} ciphertexts were given")
    rows, cols = X.shape
    weights = [[codec.to_int(coef * float(X[i, j])) for i in range(rows)] for j in range(cols)]
    n2 = pk.n_squared
    exponent = enc_r[0].exponent + 1 if rows else 2
    out = []
    for j in range(cols):
        acc = 1  # Enc(0) with r = 1
        for i, k in enumerate(weights[j]):
            if k == 0:
                continue
            acc = acc * scalar_mult(pk, k, enc_r[i]).value % n2
        out.append(Ciphertext(acc, exponent))
    return out


# -- key files -------------------------------------------------------------

def _pack_int(x: int) -> bytes:
    raw = x.to_bytes(max(1, (x.bit_length() + 7) // 8), "big")
    return struct.pack(">I", len(raw)) + raw


def _unpack_int(buf: bytes, pos: int) -> tuple[int, int]:
    if pos + 4 > len(buf):
        raise ParseError("truncated key file")
    (length,) = struct.unpack_from(">I", buf, pos)
    pos += 4
    if pos + length > len(buf):
        raise ParseError("truncated key file")
    return int.from_bytes(buf[pos:pos + length], "big"), pos + length


def serialize_keypair(sk: PrivateKey) -> bytes:
    """``VFLK`` | version | kind byte | n | p | q (length-prefixed big-endian)."""
    return (KEY_MAGIC + bytes([KEY_VERSION, 1])
            + _pack_int(sk.public_key.n) + _pack_int(sk.p) + _pack_int(sk.q))


def serialize_public_key(pk: PublicKey) -> bytes:
    return KEY_MAGIC + bytes([KEY_VERSION, 0]) + _pack_int(pk.n)


def deserialize_key(buf: bytes) -> PublicKey | PrivateKey:
    if len(buf) < 6 or buf[:4] != KEY_MAGIC:
        raise ParseError("not a key file (bad magic)")
    if buf[4] != KEY_VERSION:
        raise ParseError(f"unsupported key file version {buf[4]}")
    kind = buf[5]
    n, pos = _unpack_int(buf, 6)
    if kind == 0:
        return PublicKey(n)
    if kind != 1:
        raise ParseError(f"unknown key kind {kind}")
    p, pos = _unpack_int(buf, pos)
    q, pos = _unpack_int(buf, pos)
    if p * q != n:
        raise ParseError("private key primes do not match modulus")
    return keypair_from_primes(p, q)[1]


def save_key(key: PublicKey | PrivateKey, path: str | Path, force: bool = False) -> None:
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists; pass force=True to overwrite")
    data = serialize_keypair(key) if isinstance(key, PrivateKey) else serialize_public_key(key)
    path.write_bytes(data)


def load_key(path: str | Path) -> PublicKey | PrivateKey:
    return deserialize_key(Path(path).read_bytes())
