from __future__ import annotations

import json
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aerisai import paillier
from aerisai.paillier import (
    CodecOverflowError,
    EncryptedVector,
    FixedPointCodec,
    KeyMismatchError,
    PlaintextRangeError,
)

SCALE = 2**24


# -- setup ---------------------------------------------------------------------


def test_setup_1024_bits(keys_c):
    pk, sk = keys_c
    assert pk.n.bit_length() == 1024
    assert pk.h == pk.n + 1
    assert pk.n_squared == pk.n * pk.n
    assert sk.p != sk.q and sk.p * sk.q == pk.n
    assert math.lcm(sk.p - 1, sk.q - 1) == sk.tau


def test_private_key_mu_invariant(keys_c):
    pk, sk = keys_c
    L = (pow(pk.h, sk.tau, pk.n_squared) - 1) // pk.n
    assert sk.mu * L % pk.n == 1


def test_toy_primes():
    pk, sk = paillier.keypair_from_primes(5, 7)
    assert pk.n == 35
    assert sk.tau == 12
    assert pk.h == 36


def test_toy_key_brute_force(toy_keys):
    pk, sk = toy_keys
    for m in range(pk.n):
        for rho in (1, 2, 3, 4, 6, 8, 34):
            ct = paillier.encrypt_with_rho(pk, m, rho)
            assert paillier.decrypt(sk, ct) == m
            assert paillier.decrypt_textbook(sk, ct) == m
    assert paillier.decrypt(sk, paillier.encrypt_with_rho(pk, 3, 2)) == 3


def test_same_seed_same_keypair():
    a = paillier.paillier_setup(1024, random.Random(9))
    b = paillier.paillier_setup(1024, random.Random(9))
    assert a == b
    assert a[0].obf_base == b[0].obf_base


def test_rejects_unsupported_size():
    with pytest.raises(paillier.SetupError):
        paillier.paillier_setup(512, random.Random(1))


def test_equal_primes_rejected():
    with pytest.raises(paillier.SetupError):
        paillier.keypair_from_primes(7, 7)


def test_prime_generation_budget():
    # a retry budget of zero candidates cannot succeed
    with pytest.raises(paillier.SetupError):
        paillier.generate_prime(64, random.Random(1), retries=0)


def test_primality():
    rng = random.Random(2)
    assert paillier.is_probable_prime(2**127 - 1, rng)
    assert not paillier.is_probable_prime(2**128 + 1, rng)
    assert not paillier.is_probable_prime(561, rng)  # Carmichael


# -- codec ---------------------------------------------------------------------


def test_codec_examples(keys_c):
    codec = FixedPointCodec(keys_c[0].n)
    assert codec.encode(0.0) == 0
    assert codec.encode(1.5) == 25165824
    assert codec.encode(-1.0) == codec.modulus - 16777216
    assert codec.decode(codec.encode(-1.0)) == -1.0


def test_codec_overflow(keys_c):
    codec = FixedPointCodec(keys_c[0].n)
    limit = codec.modulus / 4 / SCALE
    with pytest.raises(CodecOverflowError):
        codec.encode(limit * 1.01)
    with pytest.raises(CodecOverflowError):
        codec.encode(float("nan"))
    with pytest.raises(CodecOverflowError):
        codec.encode_array([0.0, float("inf")])


def test_codec_scale_must_be_power_of_two():
    with pytest.raises(ValueError):
        FixedPointCodec(35, scale=3)


@given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
def test_codec_signed_roundtrip(x):
    codec = FixedPointCodec(2**1023 + 1)
    assert codec.decode(codec.encode(x)) == np.rint(x * SCALE) / SCALE
    assert abs(codec.decode(codec.encode(x)) - x) <= 1 / SCALE
    assert codec.encode_int(codec.signed(codec.encode(x))) == codec.encode(x)


# -- encryption ----------------------------------------------------------------


def test_encrypt_zero(keys_c):
    pk, sk = keys_c
    assert paillier.decrypt(sk, paillier.encrypt(pk, 0, random.Random(1))) == 0


def test_fresh_randomness(keys_c):
    pk, _ = keys_c
    a = paillier.encrypt(pk, 42, random.Random(1))
    b = paillier.encrypt(pk, 42, random.Random(2))
    assert a.value != b.value
    rng = random.Random(3)
    values = {paillier.encrypt(pk, 7, rng).value for _ in range(100)}
    assert len(values) == 100


def test_plaintext_range(keys_c):
    pk, _ = keys_c
    with pytest.raises(PlaintextRangeError):
        paillier.encrypt(pk, pk.n, random.Random(1))
    with pytest.raises(PlaintextRangeError):
        paillier.encrypt(pk, -1, random.Random(1))


def test_roundtrip_many(keys_c):
    pk, sk = keys_c
    rng = random.Random(4)
    ms = [rng.randrange(pk.n) for _ in range(1000)]
    vec = paillier.encrypt_ints(pk, ms, rng)
    assert paillier.decrypt_vector_ints(sk, vec) == ms
    # the CRT path and the textbook formula agree
    for i in range(0, 1000, 100):
        assert paillier.decrypt_textbook(sk, vec[i]) == ms[i]


def test_fixed_base_randomiser_is_nth_residue(keys_c):
    """DJN randomisers are n-th powers, so the ciphertext decrypts like the textbook form."""
    pk, sk = keys_c
    (obf,) = pk.random_obfuscators(1, random.Random(5))
    # an n-th residue mod n^2 decrypts to zero when used as a ciphertext
    assert paillier.decrypt(sk, paillier.PaillierCiphertext(obf, pk.key_id)) == 0


def test_no_obf_base_path(keys_c):
    pk, sk = keys_c
    bare = paillier.PaillierPublicKey(pk.n, pk.key_bits)
    ct = paillier.encrypt(bare, 99, random.Random(6))
    assert paillier.decrypt(sk, ct) == 99


def test_key_mismatch_on_decrypt(keys_c, keys_o):
    pk, _ = keys_c
    _, sk_o = keys_o
    ct = paillier.encrypt(pk, 5, random.Random(1))
    with pytest.raises(KeyMismatchError):
        paillier.decrypt(sk_o, ct)


def test_degenerate_ciphertext(keys_c):
    pk, sk = keys_c
    with pytest.raises(paillier.DecryptionError):
        paillier.decrypt(sk, paillier.PaillierCiphertext(sk.p, pk.key_id))
    with pytest.raises(paillier.DecryptionError):
        paillier.decrypt(sk, paillier.PaillierCiphertext(0, pk.key_id))


# -- homomorphism --------------------------------------------------------------


def test_add_small(keys_c):
    pk, sk = keys_c
    rng = random.Random(7)
    e2, e3, e0 = (paillier.encrypt(pk, m, rng) for m in (2, 3, 0))
    assert paillier.decrypt(sk, paillier.add(pk, e2, e3)) == 5
    assert paillier.decrypt(sk, paillier.add(pk, e2, e0)) == 2


def test_scalar_mul_small(keys_c):
    pk, sk = keys_c
    ct = paillier.encrypt(pk, 11, random.Random(8))
    assert paillier.decrypt(sk, paillier.scalar_mul(pk, ct, 1)) == 11
    assert paillier.decrypt(sk, paillier.scalar_mul(pk, ct, 0)) == 0
    assert paillier.decrypt(sk, paillier.scalar_mul(pk, ct, 6)) == 66
    with pytest.raises(PlaintextRangeError):
        paillier.scalar_mul(pk, ct, pk.n)


def test_homomorphic_ops_reject_mixed_keys(keys_c, keys_o):
    pk, _ = keys_c
    pk_o, _ = keys_o
    a = paillier.encrypt(pk, 1, random.Random(1))
    b = paillier.encrypt(pk_o, 1, random.Random(1))
    with pytest.raises(KeyMismatchError):
        paillier.add(pk, a, b)
    with pytest.raises(KeyMismatchError):
        paillier.scalar_mul(pk_o, a, 2)
    with pytest.raises(KeyMismatchError):
        paillier.add_vectors(pk, [EncryptedVector(pk.key_id, (a.value,)), EncryptedVector(pk_o.key_id, (b.value,))])


@settings(max_examples=40, deadline=None)
@given(a=st.integers(min_value=0, max_value=2**1000), b=st.integers(min_value=0, max_value=2**1000), k=st.integers(min_value=0, max_value=2**20))
def test_homomorphic_laws_property(keys_c, a, b, k):
    pk, sk = keys_c
    rng = random.Random(a ^ b)
    ca, cb = paillier.encrypt(pk, a, rng), paillier.encrypt(pk, b, rng)
    assert paillier.decrypt(sk, paillier.add(pk, ca, cb)) == (a + b) % pk.n
    assert paillier.decrypt(sk, paillier.scalar_mul(pk, ca, k)) == a * k % pk.n


def test_vector_ops(keys_c):
    pk, sk = keys_c
    rng = random.Random(9)
    vs = [paillier.encrypt_ints(pk, [i, 2 * i, 3], rng) for i in range(4)]
    total = paillier.add_vectors(pk, vs)
    assert paillier.decrypt_vector_ints(sk, total) == [6, 12, 12]
    assert paillier.decrypt_vector_ints(sk, paillier.scalar_mul_vector(pk, total, 5)) == [30, 60, 60]
    assert paillier.add_vectors(pk, vs[:1]) == vs[0]
    with pytest.raises(paillier.PaillierError):
        paillier.add_vectors(pk, [vs[0], paillier.encrypt_ints(pk, [1], rng)])


def test_encrypt_vector_examples(keys_c):
    pk, sk = keys_c
    codec = FixedPointCodec(pk.n)
    rng = random.Random(10)
    empty = paillier.encrypt_vector(pk, [], codec, rng)
    assert len(empty) == 0
    assert paillier.decrypt_vector(sk, empty, codec).tolist() == []
    out = paillier.decrypt_vector(sk, paillier.encrypt_vector(pk, [0.5, -0.25], codec, rng), codec)
    assert out.tolist() == [0.5, -0.25]


def test_encrypt_vector_random_1000(keys_c):
    pk, sk = keys_c
    codec = FixedPointCodec(pk.n)
    xs = np.random.default_rng(0).normal(scale=100.0, size=1000)
    out = paillier.decrypt_vector(sk, paillier.encrypt_vector(pk, xs, codec, random.Random(11)), codec)
    assert np.max(np.abs(out - xs)) <= 1 / SCALE


def test_encrypt_vector_reports_failing_index(keys_c):
    pk, _ = keys_c
    codec = FixedPointCodec(pk.n)
    with pytest.raises(CodecOverflowError, match="index 2"):
        paillier.encrypt_vector(pk, [0.0, 1.0, 1e305], codec, random.Random(1))
    with pytest.raises(CodecOverflowError, match="index 1"):
        paillier.encrypt_vector(pk, [0.0, 2.0**998], codec, random.Random(1))


def test_codec_modulus_must_match_key(keys_c, keys_o):
    with pytest.raises(KeyMismatchError):
        paillier.encrypt_vector(keys_c[0], [1.0], FixedPointCodec(keys_o[0].n), random.Random(1))


# -- serialisation ------------------------------------------------------------


def test_vector_serialisation(keys_c):
    pk, _ = keys_c
    vec = paillier.encrypt_ints(pk, [1, 2, 3], random.Random(12))
    raw = vec.to_bytes(pk.ciphertext_bytes)
    assert pk.ciphertext_bytes == 256
    assert len(raw) == 17 + 3 * 256
    assert EncryptedVector.from_bytes(raw) == vec
    with pytest.raises(paillier.PaillierError):
        EncryptedVector.from_bytes(raw[:-1])
    with pytest.raises(paillier.PaillierError):
        EncryptedVector.from_bytes(b"XX" + raw[2:])


def test_key_files(tmp_path, keys_c):
    pk, sk = keys_c
    paillier.save_public_key(pk, tmp_path / "pk.json")
    paillier.save_private_key(sk, tmp_path / "sk.json")
    doc = json.loads((tmp_path / "pk.json").read_text())
    assert set(doc) >= {"n", "key_bits", "key_id"}
    assert set(json.loads((tmp_path / "sk.json").read_text())) >= {"tau", "mu", "n"}
    pk2 = paillier.load_public_key(tmp_path / "pk.json")
    assert pk2 == pk and pk2.obf_base == pk.obf_base
    assert paillier.load_private_key(tmp_path / "sk.json") == sk
    doc["key_id"] = "00" * 8
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    with pytest.raises(KeyMismatchError):
        paillier.load_public_key(tmp_path / "bad.json")
