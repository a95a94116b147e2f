from __future__ import annotations

import random

import numpy as np
import pytest

from aerisai import cpabe, ledger, oracle, paillier, symwrap
from aerisai.ledger import Ledger, TxKind
from aerisai.oracle import NoiseBroadcast, Oracle, OracleError
from aerisai.paillier import FixedPointCodec

POLICY = "role:client AND org:a"


@pytest.fixture(scope="module")
def env(keys_c, keys_o, abe):
    (pk_c, sk_c), (pk_o, sk_o) = keys_c, keys_o
    pk_abe, mk = abe
    rng = random.Random(31)
    good = cpabe.keygen(mk, {"role:client", "org:a"}, rng)
    bad = cpabe.keygen(mk, {"role:client", "org:b"}, rng)
    return pk_c, sk_c, pk_o, sk_o, pk_abe, good, bad


def open_with(bc, uk):
    raw = cpabe.decrypt(bc.wrapped_key, uk)
    return symwrap.open_sealed(symwrap.SessionKey(raw), bc.sealed)


def test_zero_noise_broadcast(env):
    _, _, pk_o, sk_o, pk_abe, good, _ = env
    codec = FixedPointCodec(pk_o.n)
    ct = paillier.encrypt_vector(pk_o, np.zeros(5), codec, random.Random(1))
    bc = oracle.process_noise_request(ct, sk_o, codec, POLICY, pk_abe, random.Random(2), 0)
    assert open_with(bc, good).tolist() == [0.0] * 5


def test_exact_recovery_and_denial(env):
    _, _, pk_o, sk_o, pk_abe, good, bad = env
    codec = FixedPointCodec(pk_o.n)
    zeta = np.round(np.random.default_rng(0).normal(0, 3, 64) * 2**24) / 2**24
    ct = paillier.encrypt_vector(pk_o, zeta, codec, random.Random(3))
    bc = oracle.process_noise_request(ct, sk_o, codec, cpabe.parse_policy(POLICY), pk_abe, random.Random(4), 7)
    assert bc.policy_text == POLICY and bc.round == 7
    assert open_with(bc, good).tobytes() == zeta.tobytes()
    with pytest.raises(cpabe.CpabeDecryptionError):
        cpabe.decrypt(bc.wrapped_key, bad)


def test_divisor_applied(env):
    _, _, pk_o, sk_o, pk_abe, good, _ = env
    codec = FixedPointCodec(pk_o.n)
    ct = paillier.encrypt_vector(pk_o, [1.5 * 6], codec, random.Random(5))
    bc = oracle.process_noise_request(ct, sk_o, codec, POLICY, pk_abe, random.Random(6), 1, divisor=6)
    assert open_with(bc, good).tolist() == [1.5]


def test_wrong_key_rejected(env):
    pk_c, _, _, sk_o, pk_abe, *_ = env
    codec_c = FixedPointCodec(pk_c.n)
    ct = paillier.encrypt_vector(pk_c, [1.0], codec_c, random.Random(7))
    with pytest.raises(paillier.KeyMismatchError):
        oracle.process_noise_request(ct, sk_o, FixedPointCodec(sk_o.n), POLICY, pk_abe, random.Random(8), 0)
    with pytest.raises(paillier.KeyMismatchError):
        Oracle(sk_o, codec_c, pk_abe, random.Random(9))


def test_cost_model():
    assert oracle.broadcast_cost_model(15) == 1
    assert oracle.broadcast_cost_model(15, unicast=True) == 15
    with pytest.raises(ValueError):
        oracle.broadcast_cost_model(-1)


def test_broadcast_bytes(env):
    _, _, pk_o, sk_o, pk_abe, good, _ = env
    codec = FixedPointCodec(pk_o.n)
    ct = paillier.encrypt_vector(pk_o, [0.25, -0.5], codec, random.Random(10))
    bc = oracle.process_noise_request(ct, sk_o, codec, POLICY, pk_abe, random.Random(11), 2)
    back = NoiseBroadcast.from_bytes(bc.to_bytes())
    assert back == bc and back.digest == bc.digest
    assert open_with(back, good).tolist() == [0.25, -0.5]
    again = oracle.process_noise_request(ct, sk_o, codec, POLICY, pk_abe, random.Random(11), 2)
    assert again.to_bytes() == bc.to_bytes()
    raw = bc.to_bytes()
    with pytest.raises(OracleError):
        NoiseBroadcast.from_bytes(b"\x07" + raw[1:])
    with pytest.raises(OracleError):
        NoiseBroadcast.from_bytes(raw[:40])


def test_broadcast_consistency_checks(env):
    _, _, pk_o, sk_o, pk_abe, *_ = env
    codec = FixedPointCodec(pk_o.n)
    ct = paillier.encrypt_vector(pk_o, [0.0], codec, random.Random(12))
    bc = oracle.process_noise_request(ct, sk_o, codec, POLICY, pk_abe, random.Random(13), 3)
    with pytest.raises(OracleError):
        NoiseBroadcast(4, bc.sealed, bc.wrapped_key, bc.policy_text)
    with pytest.raises(OracleError):
        NoiseBroadcast(3, bc.sealed, bc.wrapped_key, "role:client")


def test_serve_anchors_digest(env):
    pk_c, _, pk_o, sk_o, pk_abe, good, _ = env
    codec_c, codec_o = FixedPointCodec(pk_c.n), FixedPointCodec(pk_o.n)
    rng = random.Random(14)
    led = Ledger.create(2, ["a", "b"], pk_c, pk_o, codec_c, rng)
    for cid, z in (("a", [1.0, -1.0]), ("b", [3.0, 1.0])):
        led.upload(cid, TxKind.UPLOAD_GRADIENT, paillier.encrypt_vector(pk_c, z, codec_c, rng))
        led.upload(cid, TxKind.UPLOAD_NOISE, paillier.encrypt_vector(pk_o, z, codec_o, rng))
    led.aggregate()
    orc = Oracle(sk_o, codec_o, pk_abe, random.Random(15))
    bc = orc.serve(led, POLICY)
    assert np.allclose(open_with(bc, good), [2.0, 0.0], atol=2**-16)
    block = led.seal_block()
    tx = block.txs[-1]
    assert tx.kind == TxKind.QUERY_NOISE and tx.sender == ledger.ORACLE_SENDER
    assert bc.digest in tx.payload
    assert led.get_artifact(bc.digest) == bc.to_bytes()
    assert orc.broadcasts == [bc.digest]
    assert ledger.audit_replay(led.chain).state_hash() == led.state.state_hash()


def test_oracle_holds_no_client_secret(env):
    pk_c, sk_c, pk_o, sk_o, pk_abe, *_ = env
    orc = Oracle(sk_o, FixedPointCodec(pk_o.n), pk_abe, random.Random(16))
    secrets = {sk_c.p, sk_c.q, sk_c.mu, sk_c.tau}
    seen = set()
    stack = [orc]
    while stack:
        obj = stack.pop()
        if id(obj) in seen:
            continue
        seen.add(id(obj))
        if isinstance(obj, int):
            assert obj not in secrets
        elif isinstance(obj, paillier.PaillierPrivateKey):
            assert obj.key_id != sk_c.key_id
            stack.extend(vars(obj).values())
        elif isinstance(obj, dict):
            stack.extend(obj.values())
        elif isinstance(obj, (list, tuple, set, frozenset)):
            stack.extend(obj)
        elif hasattr(obj, "__dict__"):
            stack.extend(vars(obj).values())
    # even ignoring the key binding, SK_o cannot open client-key ciphertexts
    codec_c = FixedPointCodec(pk_c.n)
    ct = paillier.encrypt_vector(pk_c, [0.75], codec_c, random.Random(17))
    assert orc.decrypt_raw(ct, check_key=False) != paillier.decrypt_vector_ints(sk_c, ct)
    with pytest.raises(paillier.KeyMismatchError):
        orc.decrypt_raw(ct)
