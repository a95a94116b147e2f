"""Symmetric pairing group on a supersingular curve.

The curve is y^2 = x^3 + x over F_p with p = 3 (mod 4), so #E(F_p) = p + 1
and the embedding degree is 2. With the distortion map
psi(x, y) = (-x, i*y) the reduced Tate pairing gives a symmetric bilinear
map e: G1 x G1 -> GT, where G1 is the order-r subgroup of E(F_p) and GT the
order-r subgroup of the norm-one elements of F_p^2.

Points of G1 are affine ``(x, y)`` tuples (``None`` is the identity);
elements of GT are ``(a, b)`` tuples meaning a + b*i.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from functools import lru_cache
from types import ModuleType

from ._native import kernels as _default_kernels

G1Point = tuple[int, int] | None
GTElement = tuple[int, int]

GT_ONE: GTElement = (1, 0)


@dataclass(frozen=True)
class CurveParams:
    name: str
    p: int
    r: int

    @property
    def cofactor(self) -> int:
        return (self.p + 1) // self.r

    @property
    def field_bytes(self) -> int:
        return (self.p.bit_length() + 7) // 8


# r = 2^159 + 2^135 + 1, p = h*r - 1 (512-bit); see tools/gen_curve_params.py
SS512 = CurveParams(
    name="ss512",
    p=int(
        "80000000000000000000000000000000000000000000000000000000000000000000000000"
        "0000000000018700757d000800fff5ff000c00fff1ff041000f6fb",
        16,
    ),
    r=0x8000008000000000000000000000000000000001,
)

# r = 2^255 + 2^243 + 1, p = h*r - 1 (1536-bit)
SS1536 = CurveParams(
    name="ss1536",
    p=int(
        "8000000000000000000000000000000000000000000000000000000000000000000000000000"
        "0000000000000000000000000000000000000000000000000000000000000000000000000000"
        "0000000000000000000000000000000000000000000000000000000000000000000000000000"
        "0000000000000000000000000000000000000000000000000000000000000000000000000000"
        "0000000000000384951ef056882d76dcb5a684486187a513f08b19c9b9bf1ef03ffcedc87171"
        "7b73",
        16,
    ),
    r=0x8008000000000000000000000000000000000000000000000000000000000001,
)

CURVES = {c.name: c for c in (SS512, SS1536)}


class GroupError(ValueError):
    pass


def expand_message_xmd(msg: bytes, dst: bytes, length: int) -> bytes:
    """expand_message_xmd with SHA-256 (RFC 9380, section 5.3.1)."""
    b_in_bytes, r_in_bytes = 32, 64
    ell = -(-length // b_in_bytes)
    if ell > 255 or length > 65535 or len(dst) > 255:
        raise ValueError("expand_message_xmd: length out of range")
    dst_prime = dst + bytes([len(dst)])
    msg_prime = bytes(r_in_bytes) + msg + length.to_bytes(2, "big") + b"\x00" + dst_prime
    b0 = hashlib.sha256(msg_prime).digest()
    blocks = [hashlib.sha256(b0 + b"\x01" + dst_prime).digest()]
    for i in range(2, ell + 1):
        prev = bytes(x ^ y for x, y in zip(b0, blocks[-1]))
        blocks.append(hashlib.sha256(prev + bytes([i]) + dst_prime).digest())
    return b"".join(blocks)[:length]


class PairingGroup:
    """G1, GT and the pairing for one parameter set."""

    def __init__(self, params: CurveParams = SS512, kernels: ModuleType | None = None):
        self.params = params
        self.p = params.p
        self.order = params.r
        self.k = kernels or _default_kernels
        self._hash_cache = lru_cache(maxsize=4096)(self._hash_to_g1)
        self.g = self.hash_to_g1(b"generator", dst=b"aerisai/generator")
        self._egg: GTElement | None = None

    def __repr__(self) -> str:
        return f"PairingGroup({self.params.name}, backend={self.k.NAME})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, PairingGroup) and other.params == self.params

    def __hash__(self) -> int:
        return hash(self.params)

    # -- G1 --------------------------------------------------------------
    def is_on_curve(self, P: G1Point) -> bool:
        if P is None:
            return True
        x, y = P
        p = self.p
        return 0 <= x < p and 0 <= y < p and (y * y - x * x * x - x) % p == 0

    def mul(self, P: G1Point, k: int) -> G1Point:
        if P is None:
            return None
        return self.k.g1_mul(self.p, P[0], P[1], k % self.order)

    def add(self, P: G1Point, Q: G1Point) -> G1Point:
        return self.k.g1_add(self.p, P, Q)

    def neg(self, P: G1Point) -> G1Point:
        if P is None:
            return None
        return P[0], (-P[1]) % self.p

    def hash_to_g1(self, msg: bytes, dst: bytes = b"aerisai/attr") -> G1Point:
        return self._hash_cache(bytes(msg), bytes(dst))

    def _hash_to_g1(self, msg: bytes, dst: bytes) -> tuple[int, int]:
        # try-and-increment on x, then clear the cofactor
        p = self.p
        field_len = (p.bit_length() + 128 + 7) // 8
        for ctr in range(256):
            u = expand_message_xmd(msg + bytes([ctr]), dst, field_len)
            x = int.from_bytes(u, "big") % p
            rhs = (x * x * x + x) % p
            y = pow(rhs, (p + 1) // 4, p)
            if y * y % p != rhs:
                continue
            if y & 1:
                y = p - y
            P = self.k.g1_mul(p, x, y, self.params.cofactor)
            if P is not None:
                return P
        raise GroupError("hash_to_g1 failed to find a point")

    # -- GT and the pairing --------------------------------------------------
    def pair(self, P: G1Point, Q: G1Point) -> GTElement:
        return self.k.pairing(self.p, self.order, P, Q)

    @property
    def egg(self) -> GTElement:
        if self._egg is None:
            self._egg = self.pair(self.g, self.g)
        return self._egg

    def gt_mul(self, x: GTElement, y: GTElement) -> GTElement:
        return self.k.gt_mul(self.p, x, y)

    def gt_pow(self, x: GTElement, k: int) -> GTElement:
        return self.k.gt_pow(self.p, x[0], x[1], k % self.order)

    def gt_inv(self, x: GTElement) -> GTElement:
        # norm-one elements: the inverse is the conjugate
        return x[0], (-x[1]) % self.p

    def gt_div(self, x: GTElement, y: GTElement) -> GTElement:
        return self.gt_mul(x, self.gt_inv(y))

    def is_gt(self, x: GTElement) -> bool:
        a, b = x
        p = self.p
        return 0 <= a < p and 0 <= b < p and (a * a + b * b) % p == 1

    # -- randomness ----------------------------------------------------------
    def random_scalar(self, rng) -> int:
        """Uniform element of Z_r^* drawn from ``rng.getrandbits``."""
        nbits = self.order.bit_length()
        while True:
            k = rng.getrandbits(nbits)
            if 0 < k < self.order:
                return k

    # -- encodings -----------------------------------------------------------
    def g1_to_bytes(self, P: G1Point) -> bytes:
        w = self.params.field_bytes
        if P is None:
            return b"\x00" * (1 + 2 * w)
        return b"\x04" + P[0].to_bytes(w, "big") + P[1].to_bytes(w, "big")

    def g1_from_bytes(self, raw: bytes) -> G1Point:
        w = self.params.field_bytes
        if len(raw) != 1 + 2 * w:
            raise GroupError("bad G1 encoding length")
        if raw[0] == 0:
            if any(raw):
                raise GroupError("bad identity encoding")
            return None
        if raw[0] != 4:
            raise GroupError("bad G1 encoding tag")
        P = int.from_bytes(raw[1 : 1 + w], "big"), int.from_bytes(raw[1 + w :], "big")
        if not self.is_on_curve(P):
            raise GroupError("point not on curve")
        return P

    def gt_to_bytes(self, x: GTElement) -> bytes:
        w = self.params.field_bytes
        return x[0].to_bytes(w, "big") + x[1].to_bytes(w, "big")

    def gt_from_bytes(self, raw: bytes) -> GTElement:
        w = self.params.field_bytes
        if len(raw) != 2 * w:
            raise GroupError("bad GT encoding length")
        x = int.from_bytes(raw[:w], "big"), int.from_bytes(raw[w:], "big")
        if not self.is_gt(x):
            raise GroupError("not a norm-one element")
        return x

    @property
    def g1_bytes(self) -> int:
        return 1 + 2 * self.params.field_bytes

    @property
    def gt_bytes(self) -> int:
        return 2 * self.params.field_bytes


def default_group(name: str = "ss512") -> PairingGroup:
    """Shared group instance per curve name (keeps hash and pairing caches warm)."""
    return _group_by_name(name)


@lru_cache(maxsize=None)
def _group_by_name(name: str) -> PairingGroup:
    return PairingGroup(CURVES[name])
