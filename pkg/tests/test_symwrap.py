from __future__ import annotations

import random
import struct

import numpy as np
import pytest
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aerisai import symwrap
from aerisai.symwrap import IntegrityError, SealedNoise, SessionKey


def test_session_keys():
    a, b = symwrap.gen_session_key(), symwrap.gen_session_key()
    assert len(a) == 32 and len(a.bytes) == 32
    assert a != b
    assert symwrap.gen_session_key(random.Random(5)) == symwrap.gen_session_key(random.Random(5))
    assert "redacted" in repr(a)


def test_wipe():
    k = symwrap.gen_session_key(random.Random(1))
    k.wipe()
    with pytest.raises(symwrap.SymwrapError):
        _ = k.bytes
    with pytest.raises(ValueError):
        SessionKey(b"short")


def test_roundtrip_zero():
    k = symwrap.gen_session_key()
    assert symwrap.open_sealed(k, symwrap.seal(k, [0.0], 0)).tolist() == [0.0]


def test_roundtrip_large_vector():
    k = symwrap.gen_session_key(random.Random(2))
    v = np.random.default_rng(2).normal(size=10_000)
    out = symwrap.open_sealed(k, symwrap.seal(k, v, 7, random.Random(3)))
    assert out.tobytes() == v.tobytes()


@settings(max_examples=50)
@given(arrays(np.float64, st.integers(0, 64), elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_roundtrip_bit_exact(v):
    k = symwrap.gen_session_key()
    out = symwrap.open_sealed(k, symwrap.seal(k, v, 3))
    assert out.tobytes() == v.tobytes()


def test_wire_layout_matches_plain_aes_gcm():
    raw = bytes(range(32))
    k = SessionKey(raw)
    s = symwrap.seal(k, [1.5, -2.0], 9, random.Random(4))
    assert len(s.nonce) == 12 and len(s.auth_tag) == 16
    assert s.nonce[:8] == (9).to_bytes(8, "big")
    plain = AESGCM(raw).decrypt(s.nonce, s.ciphertext + s.auth_tag, struct.pack(">BQ", 1, 9))
    assert plain == struct.pack(">I", 2) + np.array([1.5, -2.0], dtype="<f8").tobytes()
    assert SealedNoise.from_bytes(s.to_bytes()) == s


@pytest.mark.parametrize("field", ["ciphertext", "auth_tag", "nonce"])
def test_bit_flip_detected(field):
    k = symwrap.gen_session_key(random.Random(6))
    s = symwrap.seal(k, np.arange(8.0), 2)
    for bit in (0, 7, 8 * len(getattr(s, field)) - 1):
        buf = bytearray(getattr(s, field))
        buf[bit // 8] ^= 1 << (bit % 8)
        bad = SealedNoise(**{**s.__dict__, field: bytes(buf)})
        with pytest.raises(IntegrityError):
            symwrap.open_sealed(k, bad)


def test_round_binding():
    k = symwrap.gen_session_key()
    s = symwrap.seal(k, [1.0], 4)
    with pytest.raises(IntegrityError):
        symwrap.open_sealed(k, SealedNoise(s.nonce, s.ciphertext, s.auth_tag, 5))


def test_wrong_key_fails_every_time():
    rng = random.Random(7)
    v = np.ones(16)
    for _ in range(100):
        k1, k2 = symwrap.gen_session_key(rng), symwrap.gen_session_key(rng)
        with pytest.raises(IntegrityError):
            symwrap.open_sealed(k2, symwrap.seal(k1, v, 1, rng))


def test_malformed_blobs():
    k = symwrap.gen_session_key()
    raw = symwrap.seal(k, [1.0, 2.0], 1).to_bytes()
    with pytest.raises(symwrap.SymwrapError):
        SealedNoise.from_bytes(raw[:-1])
    with pytest.raises(symwrap.SymwrapError):
        SealedNoise.from_bytes(b"\x09" + raw[1:])
    with pytest.raises(symwrap.SymwrapError):
        symwrap.deserialize_vector(struct.pack(">I", 3) + bytes(8))
