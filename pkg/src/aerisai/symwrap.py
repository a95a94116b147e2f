"""Session keys and authenticated sealing of real vectors (AES-256-GCM)."""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass

import numpy as np
from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

VERSION = 1
KEY_BYTES = 32
NONCE_BYTES = 12
TAG_BYTES = 16
_HEADER = struct.Struct(">BQ12sI")  # version, round, nonce, ciphertext length


class SymwrapError(Exception):
    pass


class IntegrityError(SymwrapError):
    """Authentication failed: wrong key, or tampered nonce/ciphertext/tag."""


class EntropyError(SymwrapError):
    pass


class SessionKey:
    """32-byte symmetric key held in a mutable buffer so it can be wiped."""

    __slots__ = ("_buf",)

    def __init__(self, raw: bytes):
        if len(raw) != KEY_BYTES:
            raise ValueError(f"session key must be {KEY_BYTES} bytes")
        self._buf = bytearray(raw)

    @property
    def bytes(self) -> bytes:
        if not self._buf:
            raise SymwrapError("session key has been wiped")
        return bytes(self._buf)

    def __len__(self) -> int:
        return len(self._buf)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SessionKey) and bytes(self._buf) == bytes(other._buf)

    def __hash__(self) -> int:
        return hash(bytes(self._buf))

    def __repr__(self) -> str:
        return "SessionKey(<redacted>)"

    def wipe(self) -> None:
        for i in range(len(self._buf)):
            self._buf[i] = 0
        self._buf = bytearray()

    def __del__(self) -> None:
        try:
            self.wipe()
        except Exception:
            pass


def _random_bytes(rng, n: int) -> bytes:
    if rng is None:
        try:
            return os.urandom(n)
        except NotImplementedError as exc:  # pragma: no cover
            raise EntropyError("no system entropy source") from exc
    return rng.getrandbits(8 * n).to_bytes(n, "big")


def gen_session_key(rng=None) -> SessionKey:
    """Fresh 32-byte key. ``rng`` (anything with ``getrandbits``) makes it reproducible."""
    return SessionKey(_random_bytes(rng, KEY_BYTES))


def serialize_vector(values) -> bytes:
    arr = np.ascontiguousarray(values, dtype="<f8").ravel()
    return struct.pack(">I", arr.size) + arr.tobytes()


def deserialize_vector(raw: bytes) -> np.ndarray:
    if len(raw) < 4:
        raise SymwrapError("truncated vector")
    (count,) = struct.unpack(">I", raw[:4])
    if len(raw) != 4 + 8 * count:
        raise SymwrapError("vector length prefix does not match payload")
    return np.frombuffer(raw[4:], dtype="<f8").astype(np.float64)


@dataclass(frozen=True)
class SealedNoise:
    nonce: bytes
    ciphertext: bytes
    auth_tag: bytes
    round: int

    def to_bytes(self) -> bytes:
        return _HEADER.pack(VERSION, self.round, self.nonce, len(self.ciphertext)) + self.ciphertext + self.auth_tag

    @classmethod
    def from_bytes(cls, raw: bytes) -> "SealedNoise":
        if len(raw) < _HEADER.size + TAG_BYTES:
            raise SymwrapError("sealed blob too short")
        version, rnd, nonce, length = _HEADER.unpack_from(raw)
        if version != VERSION:
            raise SymwrapError(f"unsupported sealed version {version}")
        body = raw[_HEADER.size :]
        if len(body) != length + TAG_BYTES:
            raise SymwrapError("sealed blob length mismatch")
        return cls(nonce, body[:length], body[length:], rnd)


def _aad(rnd: int) -> bytes:
    return struct.pack(">BQ", VERSION, rnd)


def seal(key: SessionKey, noise, round: int, rng=None) -> SealedNoise:
    """Encrypt a float vector. Nonce = round (8 bytes) || 4 random bytes."""
    if not 0 <= round < 2**64:
        raise ValueError("round out of range")
    nonce = round.to_bytes(8, "big") + _random_bytes(rng, 4)
    out = AESGCM(key.bytes).encrypt(nonce, serialize_vector(noise), _aad(round))
    return SealedNoise(nonce, out[:-TAG_BYTES], out[-TAG_BYTES:], round)


def open_sealed(key: SessionKey, sealed: SealedNoise) -> np.ndarray:
    """Verify and decrypt; any mismatch raises IntegrityError."""
    if len(sealed.nonce) != NONCE_BYTES or len(sealed.auth_tag) != TAG_BYTES:
        raise IntegrityError("malformed nonce or tag")
    if int.from_bytes(sealed.nonce[:8], "big") != sealed.round:
        raise IntegrityError("nonce does not bind the stated round")
    try:
        plain = AESGCM(key.bytes).decrypt(sealed.nonce, sealed.ciphertext + sealed.auth_tag, _aad(sealed.round))
    except InvalidTag as exc:
        raise IntegrityError("authentication tag mismatch") from exc
    return deserialize_vector(plain)


# left out of __all__ so a star import does not shadow the builtin
open = open_sealed  # noqa: A001

__all__ = [
    "SessionKey",
    "SealedNoise",
    "SymwrapError",
    "IntegrityError",
    "gen_session_key",
    "seal",
    "open_sealed",
    "serialize_vector",
    "deserialize_vector",
]
