from __future__ import annotations

import math
import random

import numpy as np
import pytest

from aerisai import cpabe, mlkit, paillier
from aerisai.client import (
    AccessDeniedError,
    ClientError,
    ClientState,
    DecryptCache,
    DpConfig,
    client_round,
    compute_delta,
    download_and_restore,
    encrypt_and_upload,
    local_train,
    noise_scale,
    perturb,
    unwrap_noise,
)
from aerisai.ledger import Ledger
from aerisai.oracle import Oracle
from aerisai.paillier import FixedPointCodec

DIMS = (1, 2)  # 4 parameters
POLICY = "role:client"


@pytest.fixture(scope="module")
def world(keys_c, keys_o, abe):
    (pk_c, sk_c), (pk_o, sk_o) = keys_c, keys_o
    pk_abe, mk = abe
    return pk_c, sk_c, pk_o, sk_o, pk_abe, mk


def make_client(world, i, shard, init, dp, attrs=("role:client",), **kw):
    pk_c, sk_c, pk_o, _, _, mk = world
    return ClientState(
        id=f"c{i}",
        data_shard=shard,
        local_model=init,
        ppk_c=pk_c,
        sk_c=sk_c,
        ppk_o=pk_o,
        abe_key=cpabe.keygen(mk, set(attrs), random.Random(500 + i)),
        attrs=frozenset(attrs),
        dp=dp,
        rng=random.Random(600 + i),
        noise_rng=np.random.default_rng(700 + i),
        train_seed=i,
        adam=mlkit.AdamState.fresh(init.n_params, 0.05),
        **kw,
    )


def make_world(world, n, dp, dims=DIMS, attrs=None, seed=0, **kw):
    pk_c, _, pk_o, sk_o, pk_abe, _ = world
    ds = mlkit.make_synthetic(40 * n, dims[0], dims[-1], seed)
    parts = mlkit.partition_indices(len(ds), n, seed)
    init = mlkit.MlpModel.init(dims, seed)
    attrs = attrs or [("role:client",)] * n
    clients = [make_client(world, i, ds.subset(parts[i]), init, dp, attrs[i], **kw) for i in range(n)]
    led = Ledger.create(init.params, [c.id for c in clients], pk_c, pk_o, FixedPointCodec(pk_c.n), random.Random(seed))
    orc = Oracle(sk_o, FixedPointCodec(pk_o.n), pk_abe, random.Random(seed + 1))
    return clients, led, orc, init


def protocol_round(clients, led, orc, remove_noise=True):
    for c in clients:
        delta_hat, zeta = client_round(c)
        encrypt_and_upload(c, delta_hat, zeta, led)
    led.aggregate()
    bc = orc.serve(led, POLICY) if remove_noise else None
    cache = DecryptCache()
    out = [download_and_restore(c, led, bc, cache, remove_noise) for c in clients]
    led.seal_block()
    return out, bc


# -- calibration and pure steps ---------------------------------------------------------------


def test_noise_scale():
    assert noise_scale(0.4) == pytest.approx(math.sqrt(2 * math.log(1.25e5)) / 0.4)
    assert 12.0 < noise_scale(0.4) < 12.2
    assert noise_scale(0.4, clip_c=2.0) == pytest.approx(2 * noise_scale(0.4))
    with pytest.raises(ValueError):
        noise_scale(0.0)
    assert DpConfig.from_budget(0.4).sigma == noise_scale(0.4)
    assert DpConfig.off().sigma == 0.0
    with pytest.raises(ValueError):
        DpConfig(-1.0)


def test_compute_delta():
    assert compute_delta(np.array([1.0, 2.0]), np.array([1.0, 2.0]), 1.0).tolist() == [0.0, 0.0]
    assert compute_delta(np.array([0.3, -5.0, 5.0]), np.array([0.1, 0.0, 0.0]), 1.0) == pytest.approx([0.2, -1.0, 1.0])
    with pytest.raises(ClientError):
        compute_delta(np.zeros(2), np.zeros(3), 1.0)


def test_perturb_sigma_zero_is_identity():
    d = np.array([0.125, -0.5])
    dh, z = perturb(d, DpConfig.off(), np.random.default_rng(0))
    assert dh.tolist() == d.tolist() and z.tolist() == [0.0, 0.0]


def test_perturb_exact_inverse():
    rng = np.random.default_rng(1)
    d = rng.uniform(-1, 1, 1000)
    dh, z = perturb(d, DpConfig(12.1), rng)
    snapped = np.rint(d * 2**24) / 2**24
    assert np.array_equal(dh - z, snapped)
    codec = FixedPointCodec(2**1024)
    assert np.array_equal(codec.decode_array(codec.encode_array(z)), z)


def test_perturb_distribution():
    mu, sigma, n = 0.5, 2.0, 100_000
    _, z = perturb(np.zeros(n), DpConfig(sigma, mu=mu), np.random.default_rng(2), scale=None)
    assert abs(z.mean() - mu) < 4 * sigma / math.sqrt(n)
    assert abs(z.std() / sigma - 1) < 0.01
    assert abs(np.mean(np.abs(z - mu) < sigma) - 0.6827) < 0.01


# -- local training --------------------------------------------------------------------------


def test_zero_epochs_returns_start(world):
    clients, *_ = make_world(world, 1, DpConfig.off())
    c = clients[0]
    start = c.local_model.params.copy()
    assert np.array_equal(local_train(c, start, epochs=0), start)


def test_training_lowers_loss(world):
    clients, *_ = make_world(world, 1, DpConfig.off(), dims=(4, 8, 3))
    c = clients[0]
    X, y = c.data_shard.features, c.data_shard.labels
    before = mlkit.mean_loss(c.local_model, X, y)
    after = mlkit.mean_loss(c.local_model.with_params(local_train(c, c.local_model.params, epochs=20)), X, y)
    assert after < before


def test_client_round_deterministic(world):
    a, *_ = make_world(world, 1, DpConfig(1.0))
    b, *_ = make_world(world, 1, DpConfig(1.0))
    ra, rb = client_round(a[0]), client_round(b[0])
    assert ra[0].tobytes() == rb[0].tobytes() and ra[1].tobytes() == rb[1].tobytes()


def test_bad_inputs(world):
    clients, *_ = make_world(world, 1, DpConfig.off())
    c = clients[0]
    with pytest.raises(ClientError):
        local_train(c, np.zeros(3))
    with pytest.raises(ClientError):
        make_client(world, 9, c.data_shard, c.local_model, DpConfig.off(), delta_base="other")


# -- protocol ------------------------------------------------------------------------------


def test_uploads_are_key_bound(world):
    pk_c, sk_c, pk_o, sk_o, *_ = world
    clients, led, orc, _ = make_world(world, 2, DpConfig(3.0))
    c = clients[0]
    delta_hat, zeta = client_round(c)
    encrypt_and_upload(c, delta_hat, zeta, led)
    grad = led.state.pending_gradients[c.id]
    noise = led.state.pending_noise[c.id]
    assert grad.key_id == pk_c.key_id and noise.key_id == pk_o.key_id
    # a peer holding SK_c sees delta_hat only
    peer_view = paillier.decrypt_vector(sk_c, grad, FixedPointCodec(pk_c.n))
    assert np.array_equal(peer_view, delta_hat)
    assert not np.array_equal(peer_view, c.last_delta)
    # the oracle recovers exactly zeta
    assert np.array_equal(paillier.decrypt_vector(sk_o, noise, FixedPointCodec(pk_o.n)), zeta)
    assert np.array_equal(delta_hat - zeta, c.last_delta)


def test_pipeline_matches_fedavg(world):
    clients, led, orc, init = make_world(world, 2, DpConfig(5.0))
    theta = init.params.copy()
    for _ in range(3):
        # plaintext FedAvg on the same deltas, recomputed from the clients' own records
        restored, bc = protocol_round(clients, led, orc)
        theta = theta + np.mean([c.last_delta for c in clients], axis=0)
        for r in restored:
            assert np.max(np.abs(r - theta)) <= 2**-16
        assert bc.round == led.state.round
    assert all(not c.access_denied for c in clients)


def test_access_denied_keeps_noisy_model(world):
    clients, led, orc, _ = make_world(world, 2, DpConfig(5.0), attrs=[("role:client",), ("role:guest",)])
    restored, bc = protocol_round(clients, led, orc)
    ok, denied = clients
    assert not ok.access_denied and denied.access_denied
    assert np.array_equal(restored[1], denied.noisy_global)
    assert np.max(np.abs(restored[1] - restored[0])) > 0.1
    with pytest.raises(AccessDeniedError):
        unwrap_noise(denied, bc)
    denied.abe_key = None
    with pytest.raises(AccessDeniedError):
        unwrap_noise(denied, bc)


def test_stale_broadcast_rejected(world):
    clients, led, orc, _ = make_world(world, 1, DpConfig.off())
    _, bc = protocol_round(clients, led, orc)
    for c in clients:
        encrypt_and_upload(c, *client_round(c), led)
    led.aggregate()
    with pytest.raises(ClientError):
        download_and_restore(clients[0], led, bc)


def test_decrypt_cache_single_decryption(world):
    clients, led, orc, _ = make_world(world, 3, DpConfig.off())
    for c in clients:
        encrypt_and_upload(c, *client_round(c), led)
    led.aggregate()
    bc = orc.serve(led, POLICY)
    cache = DecryptCache()
    outs = [download_and_restore(c, led, bc, cache) for c in clients]
    assert cache.hits == 2
    assert all(np.array_equal(outs[0], o) for o in outs)


def test_noisy_base_diverges(world):
    """Measuring deltas from the noisy global model drags the restored noise back in."""
    sigma = 5.0
    runs = {}
    for base in ("denoised", "noisy"):
        clients, led, orc, _ = make_world(world, 2, DpConfig(sigma), delta_base=base)
        for _ in range(3):
            protocol_round(clients, led, orc)
        runs[base] = float(np.mean([np.abs(c.last_delta).mean() for c in clients]))
    assert runs["denoised"] < 0.2
    assert runs["noisy"] > 0.5
