"""Paillier encryption with h = n + 1, plus a signed fixed-point codec.

Key generation takes an explicit random source (anything with
``getrandbits``) so fixtures are reproducible; pass ``random.SystemRandom()``
for real keys.

Ciphertext randomisers come from a fixed-base table: the key generator
publishes ``obf_base = (-x^2)^n mod n^2`` and every encryption uses
``obf_base ** a`` with a fresh random exponent ``a`` of ``key_bits // 2``
bits (the Damgard-Jurik-Nielsen variant). Keys without ``obf_base`` use the
textbook ``rho ** n`` randomiser.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from ._native import kernels

KEY_SIZES = (1024, 2048, 3072)
DEFAULT_SCALE = 2**24
MR_ROUNDS = 64
PRIME_RETRIES = 100_000

_SMALL_PRIMES = [q for q in range(3, 2000, 2) if all(q % d for d in range(3, int(q**0.5) + 1, 2))]


class PaillierError(Exception):
    pass


class SetupError(PaillierError):
    pass


class KeyMismatchError(PaillierError):
    pass


class PlaintextRangeError(PaillierError):
    pass


class CodecOverflowError(PaillierError, OverflowError):
    pass


class DecryptionError(PaillierError):
    pass


# -- primes --------------------------------------------------------------------


def is_probable_prime(n: int, rng, rounds: int = MR_ROUNDS) -> bool:
    """Miller-Rabin with ``rounds`` random bases (error below 4**-rounds)."""
    if n < 2:
        return False
    for q in _SMALL_PRIMES:
        if n == q:
            return True
        if n % q == 0:
            return False
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(rounds):
        a = 2 + rng.getrandbits(n.bit_length()) % (n - 3)
        x = kernels.powmod(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def generate_prime(bits: int, rng, retries: int = PRIME_RETRIES) -> int:
    """Random prime of exactly ``bits`` bits with the top two bits set."""
    for _ in range(retries):
        cand = rng.getrandbits(bits) | (3 << (bits - 2)) | 1
        if is_probable_prime(cand, rng):
            return cand
    raise SetupError(f"no {bits}-bit prime found in {retries} candidates")


# -- keys ----------------------------------------------------------------------


def _key_id(n: int) -> str:
    return hashlib.sha256(n.to_bytes((n.bit_length() + 7) // 8, "big")).hexdigest()[:16]


@dataclass(frozen=True)
class PaillierPublicKey:
    n: int
    key_bits: int
    obf_base: int | None = field(default=None, compare=False)

    @property
    def h(self) -> int:
        return self.n + 1

    @cached_property
    def n_squared(self) -> int:
        return self.n * self.n

    @cached_property
    def key_id(self) -> str:
        return _key_id(self.n)

    @property
    def ciphertext_bytes(self) -> int:
        return -(-2 * self.key_bits // 8)

    @property
    def obf_exp_bits(self) -> int:
        return max(self.key_bits // 2, 16)

    @cached_property
    def _obf_table(self):
        return kernels.FixedBase(self.obf_base, self.n_squared, self.obf_exp_bits)

    def random_obfuscators(self, count: int, rng) -> list[int]:
        """``count`` fresh values rho**n mod n**2."""
        if self.obf_base is not None:
            bits = self.obf_exp_bits
            return self._obf_table.pow_batch([rng.getrandbits(bits) for _ in range(count)])
        rhos = []
        while len(rhos) < count:
            rho = rng.getrandbits(self.n.bit_length()) % self.n
            if rho and math.gcd(rho, self.n) == 1:
                rhos.append(rho)
        return kernels.powmod_batch(rhos, self.n, self.n_squared)

    def to_dict(self) -> dict:
        out = {"n": format(self.n, "x"), "key_bits": self.key_bits, "key_id": self.key_id}
        if self.obf_base is not None:
            out["obf_base"] = format(self.obf_base, "x")
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PaillierPublicKey":
        n = int(data["n"], 16)
        pk = cls(n, int(data["key_bits"]), int(data["obf_base"], 16) if "obf_base" in data else None)
        if "key_id" in data and data["key_id"] != pk.key_id:
            raise KeyMismatchError("key_id does not match n")
        return pk


@dataclass(frozen=True)
class PaillierPrivateKey:
    tau: int
    mu: int
    n: int
    p: int | None = field(default=None, repr=False)
    q: int | None = field(default=None, repr=False)

    @cached_property
    def key_id(self) -> str:
        return _key_id(self.n)

    @cached_property
    def n_squared(self) -> int:
        return self.n * self.n

    @cached_property
    def _crt(self) -> tuple[int, int, int, int, int] | None:
        p, q = self.p, self.q
        if not p or not q or p == q:
            return None
        h = self.n + 1
        hp = pow((pow(h, p - 1, p * p) - 1) // p, -1, p)
        hq = pow((pow(h, q - 1, q * q) - 1) // q, -1, q)
        return p, q, hp, hq, pow(q, -1, p)

    def to_dict(self) -> dict:
        out = {"tau": format(self.tau, "x"), "mu": format(self.mu, "x"), "n": format(self.n, "x")}
        if self.p and self.q:
            out["p"] = format(self.p, "x")
            out["q"] = format(self.q, "x")
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PaillierPrivateKey":
        def hx(k):
            return int(data[k], 16) if k in data else None

        return cls(hx("tau"), hx("mu"), hx("n"), hx("p"), hx("q"))


def _L(x: int, n: int) -> int:
    return (x - 1) // n


def keypair_from_primes(p1: int, p2: int, key_bits: int | None = None, obf_base: int | None = None):
    """Assemble a keypair from given primes (also the test-only toy path)."""
    if p1 == p2:
        raise SetupError("primes must differ")
    n = p1 * p2
    tau = math.lcm(p1 - 1, p2 - 1)
    n2 = n * n
    try:
        mu = pow(_L(pow(n + 1, tau, n2), n), -1, n)
    except ValueError as exc:
        raise SetupError("L(h^tau) not invertible mod n") from exc
    pk = PaillierPublicKey(n, key_bits or n.bit_length(), obf_base)
    return pk, PaillierPrivateKey(tau, mu, n, p1, p2)


def paillier_setup(key_bits: int, rng) -> tuple[PaillierPublicKey, PaillierPrivateKey]:
    if key_bits not in KEY_SIZES:
        raise SetupError(f"key_bits must be one of {KEY_SIZES}")
    half = key_bits // 2
    while True:
        p1 = generate_prime(half, rng)
        p2 = generate_prime(half, rng)
        if p1 != p2 and (p1 * p2).bit_length() == key_bits:
            break
    n = p1 * p2
    while True:
        x = rng.getrandbits(key_bits) % n
        if x > 1 and math.gcd(x, n) == 1:
            break
    obf_base = kernels.powmod((-x * x) % n, n, n * n)
    return keypair_from_primes(p1, p2, key_bits, obf_base)


# -- ciphertexts ------------------------------------------------------------


@dataclass(frozen=True)
class PaillierCiphertext:
    value: int
    key_id: str


@dataclass(frozen=True)
class EncryptedVector:
    """A vector of ciphertexts under one key."""

    key_id: str
    values: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, i: int) -> PaillierCiphertext:
        return PaillierCiphertext(self.values[i], self.key_id)

    def to_bytes(self, width: int) -> bytes:
        head = b"PV\x01" + bytes.fromhex(self.key_id) + width.to_bytes(2, "big") + len(self.values).to_bytes(4, "big")
        try:
            body = b"".join(v.to_bytes(width, "big") for v in self.values)
        except OverflowError as exc:
            raise PaillierError("ciphertext wider than serialisation width") from exc
        return head + body

    @classmethod
    def from_bytes(cls, raw: bytes) -> "EncryptedVector":
        if len(raw) < 17 or raw[:3] != b"PV\x01":
            raise PaillierError("bad ciphertext vector header")
        key_id = raw[3:11].hex()
        width = int.from_bytes(raw[11:13], "big")
        count = int.from_bytes(raw[13:17], "big")
        body = raw[17:]
        if width == 0 or len(body) != width * count:
            raise PaillierError("ciphertext vector length mismatch")
        values = tuple(int.from_bytes(body[i : i + width], "big") for i in range(0, len(body), width))
        return cls(key_id, values)


def _check_key(key_id: str, *cts) -> None:
    for ct in cts:
        if ct.key_id != key_id:
            raise KeyMismatchError(f"ciphertext under {ct.key_id}, expected {key_id}")


def encrypt(pk: PaillierPublicKey, m: int, rng) -> PaillierCiphertext:
    if not 0 <= m < pk.n:
        raise PlaintextRangeError("plaintext outside [0, n)")
    (obf,) = pk.random_obfuscators(1, rng)
    (c,) = kernels.paillier_encrypt_batch([m], [obf], pk.n, pk.n_squared)
    return PaillierCiphertext(c, pk.key_id)


def encrypt_with_rho(pk: PaillierPublicKey, m: int, rho: int) -> PaillierCiphertext:
    """Textbook rho**n * h**m mod n**2 with a caller-chosen rho."""
    if not 0 <= m < pk.n:
        raise PlaintextRangeError("plaintext outside [0, n)")
    if math.gcd(rho, pk.n) != 1:
        raise PaillierError("rho must be a unit mod n")
    n2 = pk.n_squared
    return PaillierCiphertext(pow(rho, pk.n, n2) * pow(pk.h, m, n2) % n2, pk.key_id)


def _check_ciphertext_value(c: int, n: int) -> None:
    if not 0 < c < n * n or math.gcd(c, n) != 1:
        raise DecryptionError("ciphertext is not a unit mod n^2")


def decrypt(sk: PaillierPrivateKey, ct: PaillierCiphertext, *, check_key: bool = True) -> int:
    if check_key:
        _check_key(sk.key_id, ct)
    _check_ciphertext_value(ct.value, sk.n)
    return decrypt_ints(sk, [ct.value])[0]


def decrypt_textbook(sk: PaillierPrivateKey, ct: PaillierCiphertext) -> int:
    """L(c^tau mod n^2) * mu mod n, without the CRT shortcut."""
    _check_key(sk.key_id, ct)
    _check_ciphertext_value(ct.value, sk.n)
    return _L(pow(ct.value, sk.tau, sk.n_squared), sk.n) * sk.mu % sk.n


def decrypt_ints(sk: PaillierPrivateKey, values: Sequence[int]) -> list[int]:
    crt = sk._crt
    if crt is None:
        n, n2 = sk.n, sk.n_squared
        return [_L(x, n) * sk.mu % n for x in kernels.powmod_batch(list(values), sk.tau, n2)]
    return kernels.paillier_crt_decrypt_batch(list(values), *crt)


def add(pk: PaillierPublicKey, ct1: PaillierCiphertext, ct2: PaillierCiphertext) -> PaillierCiphertext:
    _check_key(pk.key_id, ct1, ct2)
    return PaillierCiphertext(ct1.value * ct2.value % pk.n_squared, pk.key_id)


def scalar_mul(pk: PaillierPublicKey, ct: PaillierCiphertext, k: int) -> PaillierCiphertext:
    _check_key(pk.key_id, ct)
    if not 0 <= k < pk.n:
        raise PlaintextRangeError("scalar outside [0, n)")
    return PaillierCiphertext(kernels.powmod(ct.value, k, pk.n_squared), pk.key_id)


# -- vectors -------------------------------------------------------------------


def encrypt_ints(pk: PaillierPublicKey, ms: Sequence[int], rng) -> EncryptedVector:
    ms = list(ms)
    for i, m in enumerate(ms):
        if not 0 <= m < pk.n:
            raise PlaintextRangeError(f"plaintext at index {i} outside [0, n)")
    obfs = pk.random_obfuscators(len(ms), rng)
    return EncryptedVector(pk.key_id, tuple(kernels.paillier_encrypt_batch(ms, obfs, pk.n, pk.n_squared)))


def add_vectors(pk: PaillierPublicKey, vectors: Sequence[EncryptedVector]) -> EncryptedVector:
    """Homomorphic elementwise sum of several vectors."""
    _check_key(pk.key_id, *vectors)
    if len({len(v) for v in vectors}) > 1:
        raise PaillierError("vector lengths differ")
    if len(vectors) == 1:
        return vectors[0]
    return EncryptedVector(pk.key_id, tuple(kernels.mulmod_fold([v.values for v in vectors], pk.n_squared)))


def scalar_mul_vector(pk: PaillierPublicKey, vec: EncryptedVector, k: int) -> EncryptedVector:
    _check_key(pk.key_id, vec)
    if not 0 <= k < pk.n:
        raise PlaintextRangeError("scalar outside [0, n)")
    return EncryptedVector(pk.key_id, tuple(kernels.powmod_batch(list(vec.values), k, pk.n_squared)))


def decrypt_vector_ints(sk: PaillierPrivateKey, vec: EncryptedVector) -> list[int]:
    _check_key(sk.key_id, vec)
    return decrypt_ints(sk, vec.values)


@dataclass(frozen=True)
class FixedPointCodec:
    """Signed fixed-point encoding into Z_modulus."""

    modulus: int
    scale: int = DEFAULT_SCALE

    def __post_init__(self):
        if self.scale <= 0 or self.scale & (self.scale - 1):
            raise ValueError("scale must be a positive power of two")

    @property
    def bound(self) -> int:
        return self.modulus // 4

    def encode_int(self, v: int) -> int:
        if abs(v) >= self.bound:
            raise CodecOverflowError("value exceeds codec headroom")
        return v % self.modulus

    def encode(self, x: float) -> int:
        if not math.isfinite(x):
            raise CodecOverflowError("non-finite value")
        scaled = np.rint(x * self.scale)
        if not math.isfinite(scaled):
            raise CodecOverflowError("value exceeds codec headroom")
        return self.encode_int(int(scaled))

    def encode_array(self, xs: Iterable[float]) -> list[int]:
        arr = np.asarray(xs, dtype=np.float64).ravel()
        if not np.all(np.isfinite(arr)):
            raise CodecOverflowError(f"non-finite value at index {int(np.argmin(np.isfinite(arr)))}")
        with np.errstate(over="ignore"):
            scaled = np.rint(arr * self.scale)
        if not np.all(np.isfinite(scaled)):
            raise CodecOverflowError(f"value at index {int(np.argmin(np.isfinite(scaled)))} exceeds codec headroom")
        out = []
        for i, v in enumerate(scaled.tolist()):
            iv = int(v)
            if abs(iv) >= self.bound:
                raise CodecOverflowError(f"value at index {i} exceeds codec headroom")
            out.append(iv % self.modulus)
        return out

    def signed(self, v: int) -> int:
        v %= self.modulus
        return v - self.modulus if v > self.modulus // 2 else v

    def decode(self, v: int, divisor: int = 1) -> float:
        return self.signed(v) / (self.scale * divisor)

    def decode_array(self, vs: Iterable[int], divisor: int = 1) -> np.ndarray:
        denom = self.scale * divisor
        return np.array([self.signed(v) / denom for v in vs], dtype=np.float64)


def encrypt_vector(pk: PaillierPublicKey, xs, codec: FixedPointCodec, rng) -> EncryptedVector:
    if codec.modulus != pk.n:
        raise KeyMismatchError("codec modulus differs from key")
    return encrypt_ints(pk, codec.encode_array(xs), rng)


def decrypt_vector(sk: PaillierPrivateKey, vec: EncryptedVector, codec: FixedPointCodec, divisor: int = 1) -> np.ndarray:
    if codec.modulus != sk.n:
        raise KeyMismatchError("codec modulus differs from key")
    return codec.decode_array(decrypt_vector_ints(sk, vec), divisor)


# -- key files -------------------------------------------------------------------


def save_public_key(pk: PaillierPublicKey, path) -> None:
    with open(path, "w") as fh:
        json.dump(pk.to_dict(), fh, indent=1)


def load_public_key(path) -> PaillierPublicKey:
    with open(path) as fh:
        return PaillierPublicKey.from_dict(json.load(fh))


def save_private_key(sk: PaillierPrivateKey, path) -> None:
    with open(path, "w") as fh:
        json.dump(sk.to_dict(), fh, indent=1)


def load_private_key(path) -> PaillierPrivateKey:
    with open(path) as fh:
        return PaillierPrivateKey.from_dict(json.load(fh))
